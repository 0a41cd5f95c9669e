"""Command line interface: subcommands, formats, exit codes, stores."""

import json

import numpy as np
import pytest

from bootbayes.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture()
def gamma_spec(tmp_path):
    spec = tmp_path / "gamma.json"
    spec.write_text(json.dumps({
        "family": {"family": "gamma_scale", "n": 20},
        "mle": {"beta_hat": [1.0]},
        "statistics": ["identity"],
    }))
    return spec


@pytest.fixture()
def mvn_spec(tmp_path, scores):
    from bootbayes import MvNormalFamily

    family = MvNormalFamily(d=2, n=scores.n)
    mle = family.mle_from_data(scores.matrix)
    spec = tmp_path / "mvn.json"
    spec.write_text(json.dumps({
        "family": family.meta(),
        "mle": family.mle_meta(mle),
        "statistics": ["correlation"],
    }))
    return spec


def test_version_flag_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip()


def test_missing_subcommand_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_correlation_study_json_schema(capsys):
    code, out, _ = run_cli(capsys, "correlation", "--B", "300")
    assert code == 0
    report = json.loads(out)
    assert report["study"] == "correlation"
    assert report["B"] == 300
    assert len(report["exact_ci"]) == 2
    assert len(report["jeffreys_ci"]) == 2
    assert len(report["bca_ci"]) == 2


def test_csv_format_flattens_the_report(capsys):
    code, out, _ = run_cli(capsys, "correlation", "--B", "300",
                           "--format", "csv")
    assert code == 0
    lines = out.splitlines()
    assert "B,300" in lines
    assert any(line.startswith("jeffreys_ci.0,") for line in lines)


def test_flag_validation_rejects_bad_values():
    for argv in (["correlation", "--level", "1.5"],
                 ["correlation", "--B", "0"],
                 ["prostate"],  # --zfile is required
                 ["prostate", "--zfile", "x", "--K", "1"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2


def test_missing_zfile_path_reports_and_exits_two(capsys, tmp_path):
    code, _, err = run_cli(capsys, "prostate", "--zfile",
                           str(tmp_path / "nope.txt"), "--B", "200")
    assert code == 2
    assert "error:" in err


def test_threads_flag_does_not_change_output(capsys):
    code1, out1, _ = run_cli(capsys, "eigenratio", "--B", "400", "--threads", "1")
    code3, out3, _ = run_cli(capsys, "eigenratio", "--B", "400", "--threads", "3")
    assert code1 == code3 == 0
    assert out1 == out3


def test_threads_env_override(capsys, monkeypatch):
    monkeypatch.setenv("BOOTBAYES_THREADS", "4")
    _, out_env, _ = run_cli(capsys, "correlation", "--B", "300")
    monkeypatch.delenv("BOOTBAYES_THREADS")
    _, out_plain, _ = run_cli(capsys, "correlation", "--B", "300")
    assert out_env == out_plain


def test_run_subcommand_reports_posterior_summary(capsys, gamma_spec):
    code, out, _ = run_cli(capsys, "run", "--family-spec", str(gamma_spec),
                           "--B", "500", "--seed", "3")
    assert code == 0
    report = json.loads(out)
    assert report["family"] == "gamma_scale(n=20)"
    assert report["prior"] == "jeffreys"
    assert not report["store_reused"]
    (summary,) = report["summaries"]
    assert summary["statistic"] == "identity"
    assert summary["ci"][0] < summary["estimate"] < summary["ci"][1]
    assert 0 < summary["ess"] <= 500


def test_run_subcommand_store_write_then_reuse(capsys, gamma_spec, tmp_path):
    store = tmp_path / "run.csv"
    code, _, err = run_cli(capsys, "run", "--family-spec", str(gamma_spec),
                           "--B", "400", "--seed", "3", "--store", str(store))
    assert code == 0
    assert "wrote store" in err
    assert store.is_file()

    code, out, err = run_cli(capsys, "run", "--family-spec", str(gamma_spec),
                             "--B", "400", "--seed", "3", "--store", str(store),
                             "--prior", "flat")
    assert code == 0
    assert "reusing store" in err
    report = json.loads(out)
    assert report["store_reused"]
    assert report["summaries"][0]["prior"] == "flat"

    code, _, err = run_cli(capsys, "run", "--family-spec", str(gamma_spec),
                           "--B", "999", "--seed", "3", "--store", str(store))
    assert code == 2
    assert "store holds" in err


def test_run_flat_and_jeffreys_priors_differ(capsys, gamma_spec):
    _, out_j, _ = run_cli(capsys, "run", "--family-spec", str(gamma_spec),
                          "--B", "800", "--seed", "3")
    _, out_f, _ = run_cli(capsys, "run", "--family-spec", str(gamma_spec),
                          "--B", "800", "--seed", "3", "--prior", "flat")
    est_j = json.loads(out_j)["summaries"][0]["estimate"]
    est_f = json.loads(out_f)["summaries"][0]["estimate"]
    assert est_j != est_f


def test_run_subcommand_bad_specs(capsys, tmp_path, gamma_spec):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    code, _, err = run_cli(capsys, "run", "--family-spec", str(broken))
    assert code == 2 and "error:" in err

    incomplete = tmp_path / "incomplete.json"
    incomplete.write_text(json.dumps({"family": {"family": "gamma_scale", "n": 5}}))
    code, _, err = run_cli(capsys, "run", "--family-spec", str(incomplete))
    assert code == 2 and "missing" in err

    unknown_stat = tmp_path / "stat.json"
    unknown_stat.write_text(json.dumps({
        "family": {"family": "gamma_scale", "n": 5},
        "mle": {"beta_hat": [1.0]},
        "statistics": ["bogus"],
    }))
    code, _, err = run_cli(capsys, "run", "--family-spec", str(unknown_stat))
    assert code == 2 and "unknown statistic" in err


def test_statistics_are_validated_against_the_family(capsys, tmp_path,
                                                     mvn_spec, scores):
    bad = json.loads(mvn_spec.read_text())
    bad["statistics"] = ["identity"]
    spec = tmp_path / "bad.json"
    spec.write_text(json.dumps(bad))
    code, _, err = run_cli(capsys, "run", "--family-spec", str(spec),
                           "--B", "50")
    assert code == 2 and "one-dimensional" in err

    gam = tmp_path / "gam.json"
    gam.write_text(json.dumps({
        "family": {"family": "gamma_scale", "n": 20},
        "mle": {"beta_hat": [1.0]},
        "statistics": ["fdr:3"],
    }))
    code, _, err = run_cli(capsys, "run", "--family-spec", str(gam), "--B", "50")
    assert code == 2 and "binned-count" in err


def test_inverse_wishart_prior_family_gate(capsys, gamma_spec, mvn_spec):
    code, _, err = run_cli(capsys, "run", "--family-spec", str(gamma_spec),
                           "--B", "200", "--prior", "inverse-wishart")
    assert code == 2 and "mvnormal" in err
    code, out, _ = run_cli(capsys, "run", "--family-spec", str(mvn_spec),
                           "--B", "200", "--prior", "inverse-wishart")
    assert code == 0
    assert json.loads(out)["summaries"][0]["prior"] == "inverse-wishart"


def test_bca_prior_uses_family_skewness_when_available(capsys, gamma_spec):
    code, out, err = run_cli(capsys, "run", "--family-spec", str(gamma_spec),
                             "--B", "2000", "--seed", "3", "--prior", "bca")
    assert code == 0
    summary = json.loads(out)["summaries"][0]
    assert summary["a_source"] == "family_skew_a"
    assert summary["a"] == pytest.approx(1.0 / (3.0 * np.sqrt(20)), rel=1e-3)


def test_bca_prior_falls_back_to_zero_acceleration(capsys, mvn_spec):
    code, out, err = run_cli(capsys, "run", "--family-spec", str(mvn_spec),
                             "--B", "500", "--prior", "bca")
    assert code == 0
    summary = json.loads(out)["summaries"][0]
    assert summary["a"] == 0.0 and summary["a_source"] == "fixed"
    assert "a=0" in err


def test_numerical_failure_exits_three(capsys, tmp_path):
    spec = tmp_path / "sick.json"
    spec.write_text(json.dumps({
        "family": {"family": "mvnormal", "d": 2, "n": 22},
        "mle": {"mu": [0.0, 0.0], "sigma": [[1.0, 2.0], [2.0, 1.0]]},
        "statistics": ["correlation"],
    }))
    code, _, err = run_cli(capsys, "run", "--family-spec", str(spec), "--B", "50")
    assert code == 3
    assert "numerical failure" in err


def test_out_directory_receives_the_report(capsys, gamma_spec, tmp_path):
    out_dir = tmp_path / "artifacts"
    code, stdout, _ = run_cli(capsys, "run", "--family-spec", str(gamma_spec),
                              "--B", "300", "--out", str(out_dir))
    assert code == 0
    on_disk = json.loads((out_dir / "report.json").read_text())
    assert on_disk == json.loads(stdout)
