"""Compiled (numba) and pure-numpy backends must agree bit for bit."""

import json
import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest

import equinav

_DRIVER = textwrap.dedent("""
    import json, sys
    import numpy as np
    import equinav
    from equinav.cli import main

    data_dir, out_dir = sys.argv[1], sys.argv[2]
    assert main(["run", "--data", data_dir, "--filter", "both",
                 "--out", out_dir, "--t0", "1"]) == 0
    print(json.dumps({"numba": equinav.NUMBA_ENABLED}))
""")


def _run_backend(mode, data_dir, out_dir):
    env = dict(os.environ, EQUINAV_NUMBA=mode)
    proc = subprocess.run(
        [sys.executable, "-c", _DRIVER, str(data_dir), str(out_dir)],
        env=env, capture_output=True, text=True, timeout=300,
    )
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout.strip().splitlines()[-1])


class TestBackendSelection:
    @pytest.mark.parametrize("mode,expected", [("off", False), ("on", True)])
    def test_env_flag_controls_backend(self, mode, expected):
        proc = subprocess.run(
            [sys.executable, "-c",
             "import equinav, json; print(json.dumps(equinav.NUMBA_ENABLED))"],
            env=dict(os.environ, EQUINAV_NUMBA=mode),
            capture_output=True, text=True, timeout=120,
        )
        assert proc.returncode == 0, proc.stderr
        assert json.loads(proc.stdout.strip()) is expected

    def test_this_session_exports_flag(self):
        assert isinstance(equinav.NUMBA_ENABLED, bool)


class TestBackendAgreement:
    def test_filter_outputs_agree_across_backends(self, tmp_path):
        """Both backends run the same arithmetic; only the summation order
        inside matrix kernels differs, so trajectories must agree to well
        below any physical tolerance (observed deltas are ~1e-13)."""
        from equinav.cli import main
        from equinav.io import read_run_csv

        data = tmp_path / "data"
        assert main(["simulate", "--scenario", "figure8", "--out", str(data),
                     "--seed", "11", "--duration", "3"]) == 0
        records = {}
        for mode in ("off", "on"):
            out = tmp_path / f"run_{mode}"
            info = _run_backend(mode, data, out)
            assert info["numba"] is (mode == "on")
            records[mode] = {
                name: read_run_csv(out / f"{name}_run.csv")
                for name in ("eqf", "mekf")
            }
        for name in ("eqf", "mekf"):
            a, b = records["off"][name], records["on"][name]
            assert np.abs(a.est_p - b.est_p).max() < 1e-10
            assert np.abs(a.est_v - b.est_v).max() < 1e-10
            assert np.abs(a.est_R - b.est_R).max() < 1e-10
            assert np.abs(a.est_calib - b.est_calib).max() < 1e-10
            assert np.abs(a.p_diag - b.p_diag).max() < 1e-10
            assert np.abs(a.nees - b.nees).max() < 1e-9
