import json

import pytest

from hlplan.workbench.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main

SYNTH = {"label_mix": {"CF": 12, "LLC": 10, "RLC": 10}, "seed": 3, "noise_lat": 0.05}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "syn.json").write_text(json.dumps(SYNTH))
    assert main(["synth", "--config", str(d / "syn.json"), "--out", str(d / "all.jsonl")]) == EXIT_OK
    assert main(["split", "--in", str(d / "all.jsonl"), "--train", str(d / "tr.jsonl"), "--test", str(d / "te.jsonl"),
                 "--counts", "8,6,6/4,4,4"]) == EXIT_OK
    return d


def test_train_eval_plan(workdir, capsys):
    d = workdir
    assert main(["train", "--exp", "3", "--variant", "f3", "--k", "2", "--train", str(d / "tr.jsonl"),
                 "--test", str(d / "te.jsonl"), "--model-out", str(d / "m.json"), "--report", str(d / "r.json"),
                 "--n-trees", "5"]) == EXIT_OK
    report = json.loads((d / "r.json").read_text())
    assert report["test"]["n_samples"] == 12
    assert main(["eval", "--model", str(d / "m.json"), "--test", str(d / "te.jsonl"), "--report", str(d / "e.json"),
                 "--csv", str(d / "e.csv")]) == EXIT_OK
    assert json.loads((d / "e.json").read_text())["confusion"] == report["test"]["confusion"]
    row = json.loads((d / "te.jsonl").read_text().splitlines()[0])
    (d / "sit.json").write_text(json.dumps({k: row[k] for k in ("road", "ego", "env")}))
    capsys.readouterr()
    assert main(["plan", "--model", str(d / "m.json"), "--situation", str(d / "sit.json")]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["decision"] in ("LLC", "CF", "RLC")


def test_sweep_and_forest(workdir, capsys):
    d = workdir
    assert main(["sweep-k", "--k", "1,2", "--train", str(d / "tr.jsonl")]) == EXIT_OK
    rows = json.loads(capsys.readouterr().out)["rows"]
    assert [r["K"] for r in rows] == [1, 2] and rows[1]["loss"] <= rows[0]["loss"] + 1e-9
    assert main(["forest-train", "--ways", "2", "--train", str(d / "tr.jsonl"), "--test", str(d / "te.jsonl"),
                 "--model-out", str(d / "f.json"), "--report", str(d / "fr.json"), "--n-trees", "5"]) == EXIT_OK
    assert json.loads((d / "f.json").read_text())["decision_pool"] == "TWO_WAY"


def test_exit_codes(workdir, capsys):
    d = workdir
    assert main(["train", "--exp", "2", "--variant", "f3", "--train", str(d / "tr.jsonl"),
                 "--model-out", str(d / "x.json")]) == EXIT_USAGE
    assert main(["split", "--in", str(d / "all.jsonl"), "--train", "a", "--test", "b", "--counts", "1,2"]) == EXIT_USAGE
    assert main(["eval", "--model", str(d / "missing.json"), "--test", str(d / "te.jsonl"),
                 "--report", str(d / "z.json")]) == EXIT_DATA
    (d / "bad.jsonl").write_text("{oops\n")
    assert main(["sweep-k", "--k", "1", "--train", str(d / "bad.jsonl")]) == EXIT_DATA
    with pytest.raises(SystemExit) as exc:
        main(["train", "--exp", "9"])
    assert exc.value.code == EXIT_USAGE
    capsys.readouterr()
