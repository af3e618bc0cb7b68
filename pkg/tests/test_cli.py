import json

import pytest

from trapverify.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_trap_gen_verify(capsys):
    code, out, _ = run(capsys, "trap-gen", "--kind", "r", "--n", "2", "--m", "9", "--seed", "7", "--verify")
    assert code == 0
    doc = json.loads(out)
    assert doc["trap"]["kind"] == "rtrap"


def test_trap_gen_ctrap(capsys):
    code, out, _ = run(capsys, "trap-gen", "--kind", "c", "--n", "4", "--m", "9", "--seed", "7")
    assert code == 0
    assert set(json.loads(out)["trap"]["final_angles"].values()) <= {0, 4}


def test_odd_rows_rejected(capsys):
    code, _, err = run(capsys, "trap-gen", "--n", "3", "--m", "9", "--seed", "1")
    assert code == 2
    assert "n must be even" in err


def test_seed_required(capsys):
    code, _, err = run(capsys, "trap-gen", "--n", "2", "--m", "5")
    assert code == 2


def test_unknown_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["analyze", "epsilon", "--v", "7", "--bogus"])
    assert exc.value.code == 2


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit):
        main(["run-protocol", "--help"])
    out = capsys.readouterr().out
    for flag in ("--protocol", "--v", "--behavior", "--pattern", "--trials", "--seed", "--config", "--threads"):
        assert flag in out


def test_config_merge_flags_win(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 2, "m": 5, "v": 1, "protocol": 2, "trials": 2, "seed": 3}))
    code, out, _ = run(capsys, "run-protocol", "--config", str(cfg), "--protocol", "1", "--no-log")
    assert code == 0
    params = json.loads(out)["params"]
    assert params["protocol"] == 1 and params["n"] == 2 and params["trials"] == 2


def test_run_protocol_counters(capsys):
    code, out, _ = run(capsys, "run-protocol", "--protocol", "2", "--n", "4", "--m", "9", "--v", "4",
                       "--trials", "1", "--seed", "5", "--no-log")
    assert code == 0
    actual = json.loads(out)["payload"]["overheads"]["actual"]
    assert actual["n_qubits_bob"] == 1620 and actual["n_qubits_alice"] == 180


def test_zflip_pattern(tmp_path, capsys):
    pat = tmp_path / "p.json"
    pat.write_text("[[1, 5]]")
    code, out, _ = run(capsys, "run-protocol", "--n", "2", "--m", "5", "--v", "2", "--behavior", "zflip",
                       "--pattern", str(pat), "--trials", "4", "--seed", "1", "--no-log")
    assert code == 0
    assert "tallies" in json.loads(out)["payload"]


@pytest.mark.parametrize("argv", [
    ["analyze", "epsilon", "--v", "99"],
    ["analyze", "table1"],
    ["analyze", "blindness"],
    ["analyze", "twirl", "--seed", "1"],
    ["analyze", "find-undetectable", "--w", "1"],
    ["analyze", "soundness", "--v", "7", "--vtilde", "1", "--trials", "200", "--seed", "2", "--threads", "1"],
])
def test_analyze_byte_identical(argv, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_epsilon_values(capsys):
    code, out, _ = run(capsys, "analyze", "epsilon", "--v", "99")
    doc = json.loads(out)
    assert code == 0
    text = json.dumps(doc)
    assert "0.0314" in text


def test_csv_format(capsys):
    code, out, _ = run(capsys, "analyze", "blindness", "--format", "csv")
    assert code == 0
    assert out.splitlines()[0].startswith("suite,check")


def test_thread_count_does_not_change_output(tmp_path):
    base = ["analyze", "soundness", "--v", "7", "--vtilde", "4", "--trials", "60", "--seed", "9"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(base + ["--threads", "1", "--out", str(a)]) == 0
    assert main(base + ["--threads", "2", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
