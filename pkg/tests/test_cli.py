import json

import numpy as np
import pytest

from npsdist import NpsModel
from npsdist.cli import EXIT_DATA, EXIT_NONCONVERGED, EXIT_OK, EXIT_USAGE, IngestionError, main, read_column


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def np_csv(tmp_path):
    y = NpsModel("np", 0, 1, 0.8).sample(np.random.default_rng(4), 1000)
    path = tmp_path / "np.csv"
    path.write_text("value\n" + "\n".join(repr(v) for v in y.tolist()) + "\n")
    return str(path)


def test_read_column(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("id,height\n1,170.5\n2,180\n3,165.25\n")
    col = read_column(str(p), "height")
    assert col.n == 3 and col.column == "height"
    assert np.allclose(read_column(str(p), "1").values, [170.5, 180, 165.25])
    p.write_text("1.5\n2.5\n")
    assert read_column(str(p)).n == 2


def test_read_column_bad_rows(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x\n1.0\n2.0\nabc\n4.0\nnan\n")
    with pytest.raises(IngestionError, match="2 non-numeric"):
        read_column(str(p))


def test_fit_bad_cell_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("1.0\n2.0\nthree\n4.0\n5.0\n")
    code, _, err = run(capsys, "fit", "--family", "ng", "--data", str(p))
    assert code == EXIT_DATA
    assert "row 3" in err


def test_fit_missing_file(capsys, tmp_path):
    code, _, _ = run(capsys, "fit", "--family", "ng", "--data", str(tmp_path / "nope.csv"))
    assert code == EXIT_DATA


def test_fit_bad_family(np_csv, capsys):
    code, _, err = run(capsys, "fit", "--family", "zeta", "--data", np_csv)
    assert code == EXIT_USAGE
    code, _, _ = run(capsys, "fit", "--family", "nb", "--data", np_csv)
    assert code == EXIT_USAGE


def test_fit_em_vs_direct(np_csv, capsys, tmp_path):
    out_em = tmp_path / "em.json"
    code, _, _ = run(capsys, "fit", "--family", "np", "--data", np_csv, "--method", "em", "--json", str(out_em))
    assert code == EXIT_OK
    code, text, _ = run(capsys, "fit", "--family", "np", "--data", np_csv, "--format", "json")
    assert code == EXIT_OK
    em, direct = json.loads(out_em.read_text()), json.loads(text)
    for key in ("mu", "sigma", "theta"):
        assert abs(em["psi_hat"][key] - direct["psi_hat"][key]) < 1e-4
    assert em["method"] == "em" and direct["method"] == "direct"
    assert set(direct) >= {"psi_hat", "se", "loglik", "aic", "bic", "trace", "converged"}


def test_fit_json_roundtrip(np_csv, capsys):
    from npsdist.inference import FitResult

    _, text, _ = run(capsys, "fit", "--family", "ng", "--data", np_csv, "--format", "json")
    again = FitResult.from_dict(json.loads(text)).to_dict()
    assert json.dumps(again, indent=2) + "\n" == text


def test_fit_nonconvergence_exit_3(np_csv, capsys):
    code, text, _ = run(capsys, "fit", "--family", "np", "--data", np_csv, "--method", "em", "--max-iter", "2",
                        "--format", "json")
    assert code == EXIT_NONCONVERGED
    assert json.loads(text)["converged"] is False


def test_fit_text_output(np_csv, capsys):
    code, text, _ = run(capsys, "fit", "--family", "normal", "--data", np_csv)
    assert code == EXIT_OK and "AIC" in text


def test_compare(np_csv, capsys):
    code, text, _ = run(capsys, "compare", "--families", "ng,np,normal", "--data", np_csv, "--format", "json")
    assert code == EXIT_OK
    rows = json.loads(text)
    aics = [r["fit"]["aic"] for r in rows]
    assert aics == sorted(aics) and [r["rank"] for r in rows] == [1, 2, 3]
    code, text, _ = run(capsys, "compare", "--families", "ng", "--data", np_csv)
    assert code == EXIT_OK and len(text.strip().splitlines()) == 2


def test_compare_ais(ais_heights, tmp_path, capsys):
    p = tmp_path / "ais.csv"
    p.write_text("height\n" + "\n".join(repr(v) for v in ais_heights.tolist()) + "\n")
    code, text, _ = run(capsys, "fit", "--family", "geometric", "--data", str(p), "--format", "json")
    assert code == EXIT_OK
    assert json.loads(text)["aic"] == pytest.approx(702.752, abs=0.5)
    code, text, _ = run(capsys, "compare", "--families", "ng,np,nl,normal", "--data", str(p), "--format", "json")
    assert json.loads(text)[0]["family"] == "geometric"


def test_moments_table_value(capsys):
    code, text, _ = run(capsys, "moments", "--family", "geometric", "--theta", "0.9")
    assert code == EXIT_OK
    d = json.loads(text)
    assert d["m1"] == pytest.approx(1.2445, abs=5e-4)
    assert d["variance"] == pytest.approx(0.8123, abs=5e-4)
    for method in ("series", "approx"):
        code, _, _ = run(capsys, "moments", "--family", "ng", "--theta", "0.5", "--method", method)
        assert code == EXIT_OK
    code, text, _ = run(capsys, "moments", "--family", "np", "--theta", "1", "--format", "text")
    assert "Kur" in text


def test_moments_bad_theta(capsys):
    code, _, _ = run(capsys, "moments", "--family", "ng", "--theta", "1.5")
    assert code == EXIT_USAGE


def test_sample(capsys, tmp_path):
    code, _, _ = run(capsys, "sample", "--family", "ng", "-n", "0")
    assert code == EXIT_USAGE
    code, a, _ = run(capsys, "sample", "--family", "ng", "-n", "25", "--seed", "7")
    code2, b, _ = run(capsys, "sample", "--family", "ng", "-n", "25", "--seed", "7")
    assert code == code2 == EXIT_OK and a == b
    assert len(a.splitlines()) == 25
    out = tmp_path / "s.txt"
    run(capsys, "sample", "--family", "np", "--theta", "2", "-n", "10", "--sampler", "compound", "-o", str(out))
    assert len(out.read_text().splitlines()) == 10


def test_curve(capsys):
    code, text, _ = run(capsys, "curve", "--family", "np", "--theta", "1", "--range", "-6:6:121")
    assert code == EXIT_OK
    lines = text.strip().splitlines()
    assert lines[0] == "y,pdf,cdf,hazard"
    table = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    assert table.shape == (121, 4)
    assert np.all(table[:, 1] >= 0)
    assert np.all(np.diff(table[:, 2]) >= 0)
    assert np.all(table[:, 3] >= 0)


@pytest.mark.parametrize("argv", [
    ["curve", "--family", "ng", "--range", "1:0:5"],
    ["curve", "--family", "ng", "--what", "pdf,bogus"],
    ["simulate", "--family", "np", "--truth", "0,1", "--n", "10"],
    ["simulate", "--family", "np", "--truth", "0,1,0.8", "--n", "0"],
])
def test_usage_errors(capsys, argv):
    assert main(argv) == EXIT_USAGE


def test_argparse_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["fit"])
    assert exc.value.code == EXIT_USAGE


def test_simulate_reproducible(capsys):
    argv = ["simulate", "--family", "np", "--truth", "0,1,0.8", "--n", "60", "--replicates", "3",
            "--seed", "9", "--method", "direct"]
    code, a, _ = run(capsys, *argv)
    _, b, _ = run(capsys, *argv)
    assert code == EXIT_OK and a == b
    d = json.loads(a)
    assert set(d) >= {"mean_estimate", "empirical_se", "mean_se", "mean_cov", "failures", "nonconverged"}


def test_verify_quick(capsys):
    code, text, _ = run(capsys, "verify", "--quick")
    assert code == EXIT_OK
    assert all("=" in line for line in text.strip().splitlines())


def test_module_entry_point():
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-m", "npsdist", "sample", "--family", "ng", "-n", "3"],
                         capture_output=True, text=True, check=True)
    assert len(out.stdout.splitlines()) == 3
