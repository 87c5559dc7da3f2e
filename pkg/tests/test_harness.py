import csv
import io
import json

import numpy as np
import pytest

from ofdmdl import pilots
from ofdmdl.harness import dataset as dsmod
from ofdmdl.harness import experiment as exp
from ofdmdl.harness.cli import build_parser, main
from ofdmdl.harness.results import HEADER, emit_results, read_results
from ofdmdl.harness.selftest import run_selftest


def small_cfg(**kw):
    base = dict(snrs=[10.0, 30.0], schemes=["LS+GI", "MMSE+GI"], frames=40, corr_frames=200, chunk=16)
    base.update(kw)
    return exp.ExperimentConfig(**base)


class TestResults:
    def test_empty_gives_header_only(self, tmp_path):
        p = emit_results([], tmp_path / "r.csv")
        assert p.read_text() == ",".join(HEADER) + "\n"
        assert read_results(p) == []

    def test_seven_columns_and_round_trip(self, tmp_path):
        rows = [exp.SweepRow("LS+GI", "VehA", 10.0, "mse", 0.1 + 1e-17, 1 / 3, 2000),
                exp.SweepRow("MMSE+GI", "VehA", 12.5, "mse", np.pi * 1e-5, 0.0, 2000)]
        p = emit_results(rows, tmp_path / "r.csv")
        with open(p, newline="") as fh:
            table = list(csv.reader(fh))
        assert all(len(r) == 7 for r in table)
        # 17 significant digits restore the double exactly
        assert read_results(p) == rows

    def test_gnuplot_companion(self, tmp_path):
        rows = [exp.SweepRow("A", "VehA", 10.0, "ber", 0.1, 0.01, 10),
                exp.SweepRow("B", "VehA", 10.0, "ber", 0.2, 0.01, 10)]
        emit_results(rows, tmp_path / "ber.csv")
        gp = (tmp_path / "ber.gp").read_text()
        assert "logscale y" in gp and "'A'" in gp and "'B'" in gp

    def test_bad_header(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("a,b\n")
        with pytest.raises(ValueError):
            read_results(p)


class TestConfig:
    def test_from_json_and_back(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"scenario": "PedA", "frames": 10, "snrs": [5, 15]}))
        cfg = exp.ExperimentConfig.from_json(p)
        assert cfg.scenario == "PedA" and cfg.frames == 10 and cfg.snrs == [5, 15]
        assert exp.ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown"):
            exp.ExperimentConfig.from_dict({"frame": 3})

    @pytest.mark.parametrize("kw", [{"snrs": []}, {"frames": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            exp.ExperimentConfig(**kw)


class TestSweeps:
    def test_mse_rerun_identical(self):
        a, b = exp.run_mse_sweep(small_cfg()), exp.run_mse_sweep(small_cfg())
        assert a == b
        assert [(r.scheme, r.snr_db) for r in a] == [("LS+GI", 10.0), ("MMSE+GI", 10.0),
                                                     ("LS+GI", 30.0), ("MMSE+GI", 30.0)]

    def test_chunking_does_not_change_result(self):
        assert exp.run_mse_sweep(small_cfg(chunk=7)) == exp.run_mse_sweep(small_cfg(chunk=40))

    def test_ls_value_matches_direct_computation(self):
        cfg = small_cfg(schemes=["LS+GI"], snrs=[20.0], frames=12)
        sc = cfg.build_scenario()
        frames = [dsmod.simulate_frame(sc, dsmod.record_seed(cfg.seed, i), 20.0) for i in range(12)]
        y = np.stack([f.y for f in frames])
        h = np.stack([f.h for f in frames])
        direct = pilots.channel_mse(pilots.interpolate_gaussian(dsmod.pilot_ls(sc, y), sc.pattern), h)
        (row,) = exp.run_mse_sweep(cfg)
        assert row.value == pytest.approx(float(np.mean(direct)), rel=1e-12)
        assert row.stderr == pytest.approx(float(np.std(direct, ddof=1) / np.sqrt(12)), rel=1e-12)

    def test_ber_counts_all_bits(self):
        cfg = small_cfg(schemes=["LS+ZF", "Perfect+ZF"], snrs=[15.0], frames=5)
        rows = exp.run_ber_sweep(cfg)
        assert all(r.n == 5 * (72 * 28 - 126) * 4 for r in rows)
        assert rows[1].value <= rows[0].value

    def test_missing_checkpoint(self, tmp_path):
        cfg = small_cfg(schemes=["CENet-mixed"], models={"cenet_mixed": str(tmp_path / "none.odlm")})
        with pytest.raises(FileNotFoundError, match="cenet_mixed"):
            exp.run_mse_sweep(cfg)

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            exp.run_ber_sweep(small_cfg(schemes=["Magic"]))


class TestCli:
    def test_selftest_output_repeatable(self):
        a, b = io.StringIO(), io.StringIO()
        assert run_selftest(a) and run_selftest(b)
        assert a.getvalue() == b.getvalue()
        assert a.getvalue().endswith("selftest: all passed\n")

    def test_sweep_rerun_byte_identical(self, tmp_path):
        args = ["sweep-mse", "--scenario", "vehA", "--snr", "10,20", "--frames", "20", "--seed", "3"]
        main(args + ["--out", str(tmp_path / "a")])
        main(args + ["--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "mse.csv").read_bytes() == (tmp_path / "b" / "mse.csv").read_bytes()
        # without checkpoints only the classical schemes run
        assert {r.scheme for r in read_results(tmp_path / "a" / "mse.csv")} == {"LS+GI", "MMSE+GI"}

    def test_config_overrides_flags(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"frames": 3, "snr": [25], "scenario": "pedA"}))
        main(["gen-data", "--frames", "50", "--config", str(cfg), "--out", str(tmp_path)])
        ds = dsmod.Dataset.load(tmp_path / "dataset.odld")
        assert len(ds) == 3 and np.all(ds.snr_db == 25.0)

    def test_config_unknown_key(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"epochs": 3}))
        with pytest.raises(SystemExit):
            main(["gen-data", "--config", str(cfg), "--out", str(tmp_path)])

    @pytest.mark.parametrize("argv", [["gen-data", "--scenario", "urban"], ["gen-data", "--snr", "a,b"],
                                      ["gen-data", "--mod", "8"], []])
    def test_bad_flags(self, argv):
        with pytest.raises(SystemExit):
            build_parser().parse_args(argv)
