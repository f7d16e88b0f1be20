"""Backend selection: DMLL_NUMBA=0 forces numpy, default prefers numba."""

import subprocess
import sys

from dmll.backend import resolve_backend


class TestResolveBackend:
    def test_flag_zero_forces_numpy(self):
        assert resolve_backend("0", numba_available=True) == "numpy"
        assert resolve_backend(" 0 ", numba_available=True) == "numpy"

    def test_default_prefers_numba_when_available(self):
        assert resolve_backend(None, numba_available=True) == "numba"
        assert resolve_backend("1", numba_available=True) == "numba"

    def test_falls_back_without_numba(self):
        assert resolve_backend(None, numba_available=False) == "numpy"
        assert resolve_backend("1", numba_available=False) == "numpy"


def _backend_in_subprocess(env_value):
    code = "from dmll import backend; print(backend.BACKEND)"
    env = {"PATH": "/usr/bin:/bin"}
    if env_value is not None:
        env["DMLL_NUMBA"] = env_value
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True
    )
    return out.stdout.strip()


class TestEnvFlag:
    def test_flag_zero(self):
        assert _backend_in_subprocess("0") == "numpy"

    def test_default_is_numba_here(self):
        # numba is installed in this environment
        assert _backend_in_subprocess(None) == "numba"
