import json

import pandas as pd
import pytest

from src.main import main


@pytest.fixture(scope="module")
def toy8_firewall(tmp_path_factory):
    path = tmp_path_factory.mktemp("fw") / "toy8.json"
    assert main(["obfuscate", "--scheme", "basic", "--rules", "toy8", "--out", str(path)]) == 0
    return path


def test_obfuscate_prints_seed_and_summary(tmp_path, capsys):
    out = tmp_path / "fw.json"
    assert main(["obfuscate", "--scheme", "dnc", "--rules", "toy8", "--seed", "9", "--out", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "seed: 9"
    summary = json.loads(lines[1])
    assert summary["scheme"] == "dnc"
    assert summary["kappa"] == [9, 9, 9, 9]
    assert summary["counts_match"] is True
    assert summary["file_bytes"] == out.stat().st_size


def test_verify_exhaustive_passes(toy8_firewall, tmp_path, capsys):
    report = tmp_path / "report.md"
    code = main(["verify", "--rules", "toy8", "--firewall", str(toy8_firewall), "--exhaustive-bits", "8",
                 "--report", str(report)])
    assert code == 0
    result = json.loads(capsys.readouterr().out.splitlines()[1])
    assert result["total"] == result["agree"] == 256
    assert "**Verdict:** PASS" in report.read_text()


def test_verify_detects_wrong_acl(tmp_path, capsys):
    built = tmp_path / "a.acl"
    built.write_text("deny 10.*.*.* * * * *\n")
    other = tmp_path / "b.acl"
    other.write_text("deny 11.*.*.* * * * *\n")
    fw = tmp_path / "fw.json"
    assert main(["obfuscate", "--scheme", "naive", "--rules", str(built), "--out", str(fw)]) == 0
    code = main(["verify", "--rules", str(other), "--firewall", str(fw), "--exhaustive-bits", "8"])
    assert code == 3
    assert "disagree" in capsys.readouterr().err


def test_verify_rejects_incompatible_firewall(toy8_firewall, capsys):
    assert main(["verify", "--rules", "standard50", "--firewall", str(toy8_firewall)]) == 2
    assert "rules" in capsys.readouterr().err


def test_filter_keeps_bad_lines_aligned(toy8_firewall, tmp_path, capsys):
    packets = tmp_path / "packets.jsonl"
    packets.write_text("\n".join([
        json.dumps({"src_ip": "10.1.0.5"}),
        json.dumps({"src_ip": "300.1.1.1"}),
        json.dumps({"src_ip": "8.8.8.8", "proto": "UDP"}),
        "",
    ]))
    out = tmp_path / "decisions.jsonl"
    assert main(["filter", "--firewall", str(toy8_firewall), "--packets", str(packets), "--out", str(out)]) == 0
    records = [json.loads(line) for line in out.read_text().splitlines()]
    assert records[0] == {"index": 0, "action": "deny", "rule": 0}
    assert records[1]["index"] == 1 and "error" in records[1]
    assert records[2] == {"index": 2, "action": "deny"}
    assert "packet 1" in capsys.readouterr().err


def test_filter_can_hide_rule_index(toy8_firewall, tmp_path, capsys):
    packets = tmp_path / "p.jsonl"
    packets.write_text(json.dumps({"src_ip": "172.1.9.9"}) + "\n")
    assert main(["filter", "--firewall", str(toy8_firewall), "--packets", str(packets), "--hide-rule-index"]) == 0
    assert json.loads(capsys.readouterr().out.strip()) == {"index": 0, "action": "permit"}


def test_tampered_firewall_exits_4(toy8_firewall, tmp_path, capsys):
    doc = json.loads(toy8_firewall.read_text())
    doc["rules"][3]["indices"][0] = (doc["rules"][3]["indices"][0] + 1) % 64
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    packets = tmp_path / "p.jsonl"
    packets.write_text(json.dumps({"src_ip": "1.2.3.4"}) + "\n")
    assert main(["filter", "--firewall", str(bad), "--packets", str(packets)]) == 4
    assert "rule 3" in capsys.readouterr().err


def test_bad_acl_exits_2(tmp_path, capsys):
    acl = tmp_path / "bad.acl"
    acl.write_text("deny 10.*.*.* * * * *\npermit 10.1 * * * *\n")
    assert main(["obfuscate", "--scheme", "basic", "--rules", str(acl), "--out", str(tmp_path / "x.json")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_non_ascii_port_exits_2(tmp_path, capsys):
    acl = tmp_path / "bad.acl"
    acl.write_text("deny * \u00b2\u00b2 * * *\n", encoding="utf-8")
    assert main(["obfuscate", "--scheme", "naive", "--rules", str(acl), "--out", str(tmp_path / "x.json")]) == 2
    assert "line 1" in capsys.readouterr().err


def test_small_basic_config_exits_2(tmp_path, capsys):
    code = main(["obfuscate", "--scheme", "basic", "--rules", "toy8", "--M", "4", "--out", str(tmp_path / "x.json")])
    assert code == 2
    assert "--M" in capsys.readouterr().err


def test_leakage_command(capsys):
    assert main(["leakage", "--M", "4", "--N", "4", "--w1", "1", "--w2", "1", "--n", "3", "--trials", "2000"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["probability"] == pytest.approx(0.875)
    assert out["trials"] == 2000
    assert abs(out["estimate"] - 0.875) < 0.05


def test_bench_writes_csv(tmp_path):
    out = tmp_path / "bench.csv"
    code = main(["bench", "--rules", "toy8", "--schemes", "basic,dnc", "--packets", "2", "--out", str(out)])
    assert code == 0
    df = pd.read_csv(out)
    assert set(df["scheme"]) == {"basic", "dnc"}
    assert {"seconds_min", "seconds_median", "seconds_max", "encode", "is_zero"} <= set(df.columns)
    assert set(df["phase"]) == {"obfuscate", "filter"}


def test_bench_primitives(tmp_path):
    out = tmp_path / "prims.csv"
    assert main(["bench", "--primitives", "--kappas", "3,5", "--repeat", "1", "--out", str(out)]) == 0
    df = pd.read_csv(out)
    assert set(df["primitive"]) == {"inst_gen", "samp", "encode", "re_rand", "mul", "is_zero"}


def test_bench_primitives_has_no_mul_row_at_kappa_1(tmp_path):
    out = tmp_path / "prims.csv"
    assert main(["bench", "--primitives", "--kappas", "1,3", "--repeat", "1", "--out", str(out)]) == 0
    df = pd.read_csv(out)
    assert set(df.loc[df["primitive"] == "mul", "kappa"]) == {3}
    assert len(df[df["kappa"] == 1]) == 5
    assert (df["seconds_min"] > 0).all()


def test_bench_over_bit_widths(tmp_path):
    out = tmp_path / "bits.csv"
    assert main(["bench", "--bits", "4,8", "--repeat", "1", "--out", str(out)]) == 0
    df = pd.read_csv(out)
    assert set(df["phase"]) == {"inst_gen", "obfuscate_rule"}
    rows = df[df["phase"] == "obfuscate_rule"].set_index("bits")
    assert rows.loc[4, "kappa"] == 5
    # one naive rule encodes 2(2n+1) times
    assert rows.loc[4, "encode"] == 18
    assert rows.loc[8, "encode"] == 34
    assert main(["bench", "--bits", "0"]) == 2


def test_unknown_scheme_in_bench(capsys):
    assert main(["bench", "--rules", "toy8", "--schemes", "hybrid"]) == 2
