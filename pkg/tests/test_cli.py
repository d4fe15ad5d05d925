import json

import pytest

from markovls.cli import main


def run(args):
    return main(args)


@pytest.fixture
def unstable_system_file(tmp_path):
    path = tmp_path / "wild.json"
    path.write_text(json.dumps({"A": [[4.0]], "B": [[1.0]], "C": [[1.0]],
                                "D": [[0.0]], "K": [[0.0]]}))
    return str(path)


class TestSimulate:
    def test_creates_files_and_prints_excitation(self, tmp_path, capsys):
        code = run(["simulate", "--system", "siso-paper", "--n", "10",
                    "--t", "5", "--seed", "1", "--out", str(tmp_path / "d")])
        assert code == 0
        out = capsys.readouterr().out
        assert "lambda_min" in out and "resolved configuration" in out
        assert (tmp_path / "d" / "dataset.csv").exists()
        assert (tmp_path / "d" / "manifest.json").exists()

    def test_zero_input_noise_is_config_error(self, tmp_path, capsys):
        code = run(["simulate", "--system", "siso-paper", "--n", "5",
                    "--t", "4", "--sigma-u", "0", "--out", str(tmp_path / "d")])
        assert code == 2
        assert "sigma_u" in capsys.readouterr().err

    def test_deterministic_output_files(self, tmp_path):
        for sub in ("a", "b"):
            run(["simulate", "--system", "siso-paper", "--n", "6", "--t", "4",
                 "--seed", "9", "--out", str(tmp_path / sub)])
        a = (tmp_path / "a" / "dataset.csv").read_bytes()
        b = (tmp_path / "b" / "dataset.csv").read_bytes()
        assert a == b

    def test_overflow_exit_code(self, tmp_path, unstable_system_file):
        code = run(["simulate", "--system", unstable_system_file, "--n", "2",
                    "--t", "900", "--out", str(tmp_path / "d")])
        assert code == 3

    def test_unknown_flag_rejected(self):
        with pytest.raises(SystemExit) as exc_info:
            run(["simulate", "--system", "siso-paper", "--n", "5", "--t", "4",
                 "--frobnicate"])
        assert exc_info.value.code == 2


class TestEstimate:
    def test_noise_free_ols(self, tmp_path, capsys):
        out_file = tmp_path / "rep.json"
        code = run(["estimate", "--system", "siso-paper", "--n", "60",
                    "--t", "8", "--sigma-e", "0", "--seed", "2",
                    "--method", "ols", "--out", str(out_file)])
        assert code == 0
        printed = capsys.readouterr().out
        err_line = [ln for ln in printed.splitlines() if "relative error" in ln][0]
        assert float(err_line.split(":")[1]) <= 1e-9
        doc = json.loads(out_file.read_text())
        assert doc["method"] == "ols" and doc["N"] == 60

    def test_optimal_weighting_needs_model(self, tmp_path, capsys):
        ds = tmp_path / "ds"
        run(["simulate", "--system", "siso-paper", "--n", "30", "--t", "5",
             "--seed", "3", "--out", str(ds)])
        code = run(["estimate", "--in", str(ds), "--method", "wls-optimal",
                    "--out", str(tmp_path / "r.json")])
        assert code == 2
        assert "true model" in capsys.readouterr().err

    def test_estimated_weighting_report_has_all_error_norms(self, tmp_path):
        out_file = tmp_path / "rep.json"
        code = run(["estimate", "--system", "siso-paper", "--n", "500",
                    "--t", "10", "--seed", "4", "--method", "wls-estimated",
                    "--extraction", "recursive", "--out", str(out_file)])
        assert code == 0
        doc = json.loads(out_file.read_text())
        for key in ("relative_error", "spectral_error", "frobenius_error",
                    "relative_frobenius_error"):
            assert doc[key] is not None and doc[key] > 0

    def test_numerics_failure_exit_code(self, tmp_path, capsys):
        # noise-free data makes the predictor regression singular
        code = run(["estimate", "--system", "siso-paper", "--n", "100",
                    "--t", "6", "--sigma-e", "0", "--seed", "5",
                    "--method", "wls-estimated", "--out",
                    str(tmp_path / "r.json")])
        assert code == 4
        assert "condition number" in capsys.readouterr().err

    def test_dataset_round_trip_with_system(self, tmp_path, capsys):
        ds = tmp_path / "ds"
        run(["simulate", "--system", "siso-paper", "--n", "200", "--t", "8",
             "--seed", "6", "--out", str(ds)])
        code = run(["estimate", "--in", str(ds), "--system", "siso-paper",
                    "--method", "wls-optimal", "--out", str(tmp_path / "r.json")])
        assert code == 0
        doc = json.loads((tmp_path / "r.json").read_text())
        assert 0 < doc["relative_error"] < 1


class TestBounds:
    def test_default_table_shows_ordering(self, capsys):
        assert run(["bounds", "--nu", "1", "--ny", "1", "--t", "10",
                    "--delta", "0.1", "--n", "500"]) == 0
        out = capsys.readouterr().out
        n_min_line = [ln for ln in out.splitlines() if ln.startswith("N_min")][0]
        parts = n_min_line.split()
        assert float(parts[2]) < float(parts[1])  # weighted needs fewer rollouts

    def test_invalid_delta(self, capsys):
        assert run(["bounds", "--delta", "1"]) == 2

    def test_h_norm_scaling(self, tmp_path):
        out1, out2 = tmp_path / "b1.json", tmp_path / "b2.json"
        run(["bounds", "--h-norm", "1.0", "--out", str(out1)])
        run(["bounds", "--h-norm", "2.0", "--out", str(out2)])
        d1 = json.loads(out1.read_text())
        d2 = json.loads(out2.read_text())
        assert d2["c_ols"] == pytest.approx(2 * d1["c_ols"])
        assert d2["c_wls"] == pytest.approx(2 * d1["c_wls"])


class TestExtract:
    def test_exact_round_trip_from_system(self, tmp_path, capsys):
        out_file = tmp_path / "ex.json"
        code = run(["extract", "--system", "siso-paper", "--t", "10",
                    "--method", "recursive", "--out", str(out_file)])
        assert code == 0
        doc = json.loads(out_file.read_text())
        assert doc["max_abs_deviation_from_truth"] <= 1e-10
        assert len(doc["blocks"]) == 9

    def test_hokalman_diagnostics(self, tmp_path):
        out_file = tmp_path / "ex.json"
        code = run(["extract", "--system", "mimo-paper", "--t", "10",
                    "--method", "ho-kalman", "--out", str(out_file)])
        assert code == 0
        doc = json.loads(out_file.read_text())
        assert len(doc["diagnostics"]["singular_values_retained"]) == 4
        assert doc["diagnostics"]["residual"] <= 1e-9

    def test_blocks_file_input(self, tmp_path):
        blocks_file = tmp_path / "blocks.json"
        blocks_file.write_text(json.dumps({"blocks": [[[0.5]], [[0.3]]]}))
        out_file = tmp_path / "ex.json"
        code = run(["extract", "--in", str(blocks_file), "--method",
                    "recursive", "--out", str(out_file)])
        assert code == 0
        doc = json.loads(out_file.read_text())
        assert doc["blocks"][1][0][0] == pytest.approx(0.55)

    def test_needs_source(self, capsys):
        assert run(["extract", "--method", "recursive"]) == 2


class TestBenchmark:
    def test_smoke_config(self, tmp_path, capsys):
        code = run(["benchmark", "--config", "figure1-siso", "--trials", "1",
                    "--points", "1", "--out", str(tmp_path / "b")])
        assert code == 0
        out = capsys.readouterr().out
        assert "estimator" in out
        for name in ("results.csv", "summary.csv", "report.json", "meta.json"):
            assert (tmp_path / "b" / name).exists()

    def test_all_bundled_configs_resolve(self, tmp_path):
        for name in ("figure1-siso", "figure1-mimo", "figure2-siso",
                     "figure2-mimo"):
            code = run(["benchmark", "--config", name, "--trials", "1",
                        "--points", "1", "--estimators", "ols",
                        "--out", str(tmp_path / name)])
            assert code == 0

    def test_malformed_json_reports_location(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"trials": ,}')
        code = run(["benchmark", "--config", str(bad), "--out",
                    str(tmp_path / "b")])
        assert code == 2
        err = capsys.readouterr().err
        assert "line 1" in err and "column" in err

    def test_byte_identical_rerun_except_meta(self, tmp_path):
        for sub in ("r1", "r2"):
            run(["benchmark", "--config", "figure1-siso", "--trials", "2",
                 "--points", "2", "--out", str(tmp_path / sub)])
        for name in ("results.csv", "summary.csv", "report.json"):
            assert ((tmp_path / "r1" / name).read_bytes()
                    == (tmp_path / "r2" / name).read_bytes())

    def test_wholly_invalid_point_exit_code(self, tmp_path, capsys,
                                            unstable_system_file):
        cfg = {"system": "siso-paper",
               "sweep": {"axis": "T", "values": [900], "fixed_N": 2},
               "trials": 1, "seed": 1, "estimators": ["ols"]}
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps(cfg))
        code = run(["benchmark", "--config", str(cfg_file), "--system",
                    unstable_system_file, "--out", str(tmp_path / "b")])
        # the unstable system overflows at T=900, so the single point dies
        assert code == 5

    def test_threads_env_cap(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MARKOVLS_THREADS", "1")
        code = run(["benchmark", "--config", "figure1-siso", "--trials", "1",
                    "--points", "1", "--threads", "8",
                    "--out", str(tmp_path / "b")])
        assert code == 0
        meta = json.loads((tmp_path / "b" / "meta.json").read_text())
        assert meta["config"]["threads"] == 1


class TestEnvironment:
    def test_outdir_env_used_when_out_missing(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MARKOVLS_OUTDIR", str(tmp_path / "envout"))
        code = run(["simulate", "--system", "siso-paper", "--n", "4",
                    "--t", "3", "--seed", "1"])
        assert code == 0
        assert (tmp_path / "envout" / "dataset" / "dataset.csv").exists()
