import os
import subprocess
import sys

import numpy as np
import pytest

from lindblad_krylov import kernels, models
from lindblad_krylov.operators import random_density_matrix
from lindblad_krylov.propagator import IntegratorConfig, propagate

compiled_only = pytest.mark.skipif("compiled" not in kernels.BACKENDS,
                                   reason="compiled extension not built")


def test_default_prefers_compiled():
    assert kernels.DEFAULT_BACKEND == kernels.BACKENDS[0]
    assert "python" in kernels.BACKENDS


@compiled_only
@pytest.mark.parametrize("model", [models.dimer_fig3(3), models.trimer_fig5(2), models.floquet_fig8(7)],
                         ids=["dimer", "trimer", "floquet"])
def test_backends_agree(model):
    rho = np.asarray(random_density_matrix(model.dim, 9))
    fast = kernels.make_kernel(model, "compiled")
    slow = kernels.make_kernel(model, "python")
    for t in (0.0, 0.4):
        a, b = fast.rhs(rho, t), slow.rhs(rho, t)
        np.testing.assert_allclose(a, b, atol=1e-13 * np.abs(b).max())
    a = propagate(model, rho, 0.1, 0.2, IntegratorConfig(backend="compiled"))
    b = propagate(model, rho, 0.1, 0.2, IntegratorConfig(backend="python"))
    np.testing.assert_allclose(a, b, atol=1e-12)


@compiled_only
def test_compiled_accepts_read_only_and_strided_input():
    model = models.dimer_fig3(2)
    k = kernels.make_kernel(model, "compiled")
    rho = np.asarray(random_density_matrix(model.dim, 1))
    ro = rho.copy()
    ro.setflags(write=False)
    np.testing.assert_array_equal(k.rhs(ro), k.rhs(rho))
    np.testing.assert_allclose(k.rhs(rho.T), kernels.make_kernel(model, "python").rhs(rho.T), atol=1e-12)


def test_no_jumps_no_drive():
    from lindblad_krylov.generator import LindbladModel
    from lindblad_krylov.operators import HilbertSpec
    m = LindbladModel.build(HilbertSpec(1, 2), np.diag([0.0, 1.0, 3.0]))
    rho = np.full((3, 3), 1 / 3)
    for backend in kernels.BACKENDS:
        out = kernels.make_kernel(m, backend).rhs(rho)
        np.testing.assert_allclose(np.diag(out), 0, atol=1e-15)


def test_env_var_forces_fallback():
    env = dict(os.environ, LINDBLAD_KRYLOV_PURE_PYTHON="1")
    code = ("from lindblad_krylov import kernels; "
            "print(kernels.BACKENDS, kernels.DEFAULT_BACKEND)")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.strip()
    assert out == "('python',) python"


def test_env_var_fallback_runs_spectrum(tmp_path):
    env = dict(os.environ, LINDBLAD_KRYLOV_PURE_PYTHON="1")
    proc = subprocess.run([sys.executable, "-m", "lindblad_krylov.cli", "spectrum", "--preset",
                           "dimer-fig3", "--size", "2", "--m", "2", "--out", str(tmp_path)],
                          env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "spectrum.json").exists()
