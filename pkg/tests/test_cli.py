import json

import pytest

from rtlleak.analysis import AnalysisConfig, run_analysis
from rtlleak.cli import main, read_config, UsageError
from rtlleak.report import build_report, to_json
from tests.conftest import design_path

EXITS = {
    "direct": 2, "cond_copy": 2, "masked": 0, "pipeline": 2, "mini_rsa_trojan": 2, "mini_rsa_tjfree": 0,
    "mini_rsa_timing": 2, "mini_rsa_ct": 2, "sha_like": 2, "exempt": 2, "order_fp": 0, "dead_debug": 0,
}


def args(manifest, name, *extra):
    d = manifest[name]
    out = ["analyze", design_path(name), "--secret", d["secret"], "--top", d["top"]]
    for r in d["random"]:
        out += ["--random", r]
    return out + list(extra)


def run(capsys, argv):
    code = main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


@pytest.mark.parametrize("mode,code", [("agnostic", 2), ("timing", 2), ("all", 2), ("channels", 0)])
def test_trojan_modes(manifest, capsys, mode, code):
    c, out, _ = run(capsys, args(manifest, "mini_rsa_trojan", "--mode", mode))
    assert c == code
    rep = json.loads(out)
    if mode == "agnostic":
        assert rep["scenario1"]["summary"]["detected"] == 8
    if mode == "timing":
        assert [b["bit"] for b in rep["scenario2"]["bits"] if b["classification"] == "detected"] == [0, 1, 2, 3]


@pytest.mark.parametrize("name", sorted(EXITS))
def test_exit_code_contract(manifest, capsys, name):
    c, out, _ = run(capsys, args(manifest, name))
    rep = json.loads(out)
    assert c == EXITS[name] == rep["verdict"]["exit_code"]
    found = rep["scenario2"]["summary"]["detected"] > 0 or rep["channels"]["count"] > 0
    assert c == (2 if found else 0)


def test_trojan_free_clean_in_all_mode(manifest, capsys):
    assert run(capsys, args(manifest, "mini_rsa_tjfree", "--mode", "all"))[0] == 0


def test_agnostic_equals_scenario1_of_all(manifest, capsys):
    _, a, _ = run(capsys, args(manifest, "mini_rsa_trojan", "--mode", "agnostic"))
    _, b, _ = run(capsys, args(manifest, "mini_rsa_trojan", "--mode", "all"))
    assert json.loads(a)["scenario1"] == json.loads(b)["scenario1"]


def test_json_byte_deterministic(manifest, capsys):
    outs = {run(capsys, args(manifest, "mini_rsa_timing"))[1] for _ in range(2)}
    assert len(outs) == 1


def test_json_round_trip(manifest):
    d = manifest["mini_rsa_trojan"]
    res = run_analysis(AnalysisConfig((design_path("mini_rsa_trojan"),), "key", d["top"], ("r",)))
    rep = build_report(res)
    assert json.loads(to_json(rep)) == rep
    assert list(rep)[:4] == ["schema", "tool", "config", "design"]
    assert rep["schema"] == "rtlleak.report/1"


def test_timings_only_on_request(manifest, capsys):
    _, out, _ = run(capsys, args(manifest, "direct"))
    assert "timings" not in json.loads(out)
    _, out, _ = run(capsys, args(manifest, "direct", "--timings"))
    assert set(json.loads(out)["timings"]) >= {"frontend", "scenario1", "scenario2", "channels"}


def test_text_table(manifest, capsys):
    _, out, _ = run(capsys, args(manifest, "mini_rsa_trojan", "--format", "text"))
    rows = {line.split()[1]: line for line in out.splitlines() if line.startswith("Scenario")}
    assert "8/0.75" in rows["1"] and "0/-" in rows["1"]
    assert "4/0.5" in rows["2"]
    assert "#Timing channels 0" in rows["3"]
    assert "key[7]" in out


def test_report_file(manifest, capsys, tmp_path):
    dest = tmp_path / "r.json"
    c, out, _ = run(capsys, args(manifest, "direct", "--report", str(dest)))
    assert c == 2 and out == ""
    assert json.loads(dest.read_text())["design"]["module"] == "direct"


def test_unwritable_report(manifest, capsys, tmp_path):
    c, _, err = run(capsys, args(manifest, "direct", "--report", str(tmp_path / "missing" / "r.json")))
    assert c == 1 and "error" in err


def test_thresholds_flags(manifest, capsys):
    _, out, _ = run(capsys, args(manifest, "cond_copy", "--detect-threshold", "0.6", "--warn-threshold", "0.4"))
    rep = json.loads(out)
    assert rep["scenario1"]["bits"][0]["classification"] == "warned"
    assert rep["config"]["detect_threshold"] == 0.6


def test_config_file_and_precedence(manifest, capsys, tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text(f"# sample\nfiles = {design_path('cond_copy')}\nsecret = key\nmode = agnostic\ndetect-threshold = 0.9\n")
    c, out, _ = run(capsys, ["analyze", "--config", str(cfg)])
    rep = json.loads(out)
    assert c == 0 and rep["config"]["mode"] == "agnostic" and rep["scenario1"]["summary"]["detected"] == 0
    c, out, _ = run(capsys, ["analyze", "--config", str(cfg), "--detect-threshold", "0.3"])
    assert c == 2 and json.loads(out)["config"]["detect_threshold"] == 0.3


def test_config_errors(tmp_path):
    bad = tmp_path / "b.cfg"
    bad.write_text("colour = blue\n")
    with pytest.raises(UsageError):
        read_config(str(bad))
    bad.write_text("horizon = lots\n")
    with pytest.raises(UsageError):
        read_config(str(bad))


@pytest.mark.parametrize("argv", [
    ["analyze", "nope.v", "--secret", "k"],
    ["analyze", "--secret", "key"],
])
def test_errors_exit_one(capsys, argv):
    c, _, err = run(capsys, argv)
    assert c == 1 and err


def test_unknown_secret(manifest, capsys):
    c, _, err = run(capsys, ["analyze", design_path("direct"), "--secret", "keey"])
    assert c == 1 and "keey" in err


def test_parse_error_diagnostic(capsys, tmp_path):
    src = tmp_path / "bad.v"
    src.write_text("module m(input a output b); endmodule\n")
    c, _, err = run(capsys, ["analyze", str(src), "--secret", "a"])
    assert c == 1 and "bad.v:1" in err


def test_dump_graph_and_fsm(manifest, capsys):
    c, out, _ = run(capsys, args(manifest, "order_fp", "--dump-graph"))
    assert c == 0 and "tmp <= key" in out
    c, out, _ = run(capsys, args(manifest, "order_fp", "--dump-fsm"))
    assert c == 0 and out.startswith('digraph "st"')


def test_oracle_subcommand(capsys):
    c, out, _ = run(capsys, ["oracle", design_path("mini_rsa_timing"), "--secret", "key", "--horizon", "12",
                             "--completion", "done"])
    rep = json.loads(out)
    assert c == 0 and rep["timing_variability"]["variable"] is True
    assert rep["leakage"] == [0.3125, 0.3125, 0.375, 0.5]


def test_help_hides_oracle(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    assert "oracle" not in capsys.readouterr().out
