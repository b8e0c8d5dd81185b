import csv

import pydot
import pytest

from nln import __version__
from nln.cli import main
from nln.model import load_model


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_bad_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--no-such-flag"])
    assert exc.value.code == 2


def test_schema_error_exit_code(tmp_path, capsys):
    schema = tmp_path / "bad.schema"
    schema.write_text("feature a bogus-kind\n")
    data = tmp_path / "d.csv"
    data.write_text("a,t\n1,0\n")
    code, _, err = run(capsys, "train", "--data", data, "--schema", schema, "--out", tmp_path / "m")
    assert code == 3
    assert err.startswith("nln: schema error:")


def test_missing_file_exit_code(tmp_path, capsys):
    code, _, err = run(capsys, "eval", "--model", tmp_path / "absent.nln", "--dataset", "tictactoe")
    assert code == 1
    assert err.startswith("nln: ")


def test_missing_data_source_is_precondition(tmp_path, capsys):
    code, _, err = run(capsys, "train", "--out", tmp_path / "m")
    assert code == 1
    assert "precondition" in err


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["train", "--dataset", "tictactoe", "--rules", "4", "--epochs", "2", "--seed", "1",
                 "--out", str(d / "m.nln"), "--log", str(d / "hist.csv")]) == 0
    return d


def test_train_writes_loadable_model(trained):
    model = load_model(trained / "m.nln")
    assert model.n_rules == 4
    assert model.meta["seed"] == 1
    with open(trained / "hist.csv") as fh:
        assert len(list(csv.DictReader(fh))) >= 1


def test_postprocess_eval_export(trained, tmp_path, capsys):
    out = tmp_path / "p.nln"
    code, _, _ = run(capsys, "postprocess", "--model", trained / "m.nln", "--dataset", "tictactoe",
                     "--retrain-epochs", "1", "--out", out, "--report", tmp_path / "r.txt")
    assert code == 0
    report = (tmp_path / "r.txt").read_text()
    assert "loss_after:" in report and "rules_after:" in report
    assert load_model(out).is_discretized()

    code, text, _ = run(capsys, "eval", "--model", out, "--dataset", "tictactoe", "--csv", tmp_path / "e.csv")
    assert code == 0
    assert "f1:" in text
    code, dot, _ = run(capsys, "export", "--model", out, "--format", "dot")
    assert code == 0
    assert pydot.graph_from_dot_data(dot)
    code, text, _ = run(capsys, "export", "--model", out, "--format", "text")
    assert code == 0
    lines = text.splitlines()
    assert lines[0].startswith("# logic program:")
    assert all(" THEN " in line for line in lines if line.startswith("IF "))


def test_export_undiscretized_fails(trained, capsys):
    code, _, err = run(capsys, "export", "--model", trained / "m.nln", "--format", "text")
    assert code == 1
    assert "not-discretized" in err


def test_merge(trained, tmp_path, capsys):
    a = tmp_path / "a.nln"
    run(capsys, "postprocess", "--model", trained / "m.nln", "--dataset", "tictactoe",
        "--retrain-epochs", "0", "--out", a, "--report", tmp_path / "r.txt")
    code, text, _ = run(capsys, "merge", "--models", a, a, "--dataset", "tictactoe", "--out", tmp_path / "mm.nln")
    assert code == 0 and "merged 2 models" in text
    load_model(tmp_path / "mm.nln")


def test_boolbench_row(tmp_path, capsys):
    code, text, _ = run(capsys, "boolbench", "--program", "mammalian", "--ratio", "0.05", "--repeats", "1",
                        "--folds", "2", "--rules", "8", "--epochs", "1", "--step-budget", "50",
                        "--csv", tmp_path / "b.csv")
    assert code == 0
    fields = dict(kv.split("=", 1) for kv in text.split())
    assert fields["program"] == "mammalian"
    assert 0 <= float(fields["accuracy"]) <= 100
    with open(tmp_path / "b.csv") as fh:
        assert next(csv.DictReader(fh))["program"] == "mammalian"


def test_oracle_csv(tmp_path, capsys):
    code, text, _ = run(capsys, "oracle", "--width", "4", "--depth", "2", "--trials", "2", "--points", "50",
                        "--csv", tmp_path / "o.csv")
    assert code == 0
    assert text.splitlines()[0] == "depth loss_exact loss_factorized"
    with open(tmp_path / "o.csv") as fh:
        assert len(list(csv.reader(fh))) > 1
