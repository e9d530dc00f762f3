import pytest

from anonlog.cli import main
from anonlog.fixtures import org_flow_lines, syslog_corpus


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("ANON_KEY_DIR", str(tmp_path))
    assert main(["keygen", "main.key"]) == 0
    (tmp_path / "flows.csv").write_text("\n".join(org_flow_lines(background=300)) + "\n")
    return tmp_path


def test_keygen(tmp_path, capsys):
    a, b = tmp_path / "a.key", tmp_path / "b.key"
    assert main(["keygen", str(a)]) == 0
    assert len(a.read_bytes()) == 32
    assert main(["keygen", str(a)]) == 2
    assert "refusing to overwrite" in capsys.readouterr().err
    assert main(["keygen", str(b)]) == 0
    assert a.read_bytes() != b.read_bytes()
    assert main(["keygen", "--force", str(a)]) == 0


def test_validate(tmp_path, capsys):
    assert main(["validate", "students"]) == 0
    assert "field ipv4-src level 1 key=main" in capsys.readouterr().out
    bad = tmp_path / "bad.profile"
    bad.write_text("profile x\nkey a a.key\nfield ipv4 level 9\n")
    assert main(["validate", str(bad)]) == 4
    assert "line 3" in capsys.readouterr().err
    bad.write_text("profile x\nfield user-id level 1 key=k9\n")
    assert main(["validate", str(bad)]) == 4


def test_anonymize_identity_and_public(work, capsys):
    assert main(["anonymize", "--schema", "netflow", "--profile", "internal",
                 "--output", "same.csv", "flows.csv"]) == 0
    assert (work / "same.csv").read_bytes() == (work / "flows.csv").read_bytes()
    assert main(["anonymize", "--schema", "netflow", "--profile", "public",
                 "--output", "pub.csv", "flows.csv"]) == 0
    out = (work / "pub.csv").read_text().splitlines()
    raw = (work / "flows.csv").read_text().splitlines()
    assert len(out) == len(raw) and out != raw
    err = capsys.readouterr().err
    assert f"records processed {len(raw)}" in err


def test_anonymize_errors(work, capsys):
    (work / "garbage.txt").write_text("not a flow\nnor this\n")
    assert main(["anonymize", "--schema", "netflow", "--profile", "internal", "--strict",
                 "--output", "g.out", "garbage.txt"]) == 1
    assert "garbage.txt:1\twrong column count" in capsys.readouterr().err
    assert not (work / "g.out").exists()
    assert main(["anonymize", "--schema", "netflow", "--profile", "internal",
                 "garbage.txt"]) == 0
    assert main(["anonymize", "--schema", "netflow", "--profile", "internal", "nope.csv"]) == 3
    (work / "bad.profile").write_text("profile x\nfield ipv4 level 7\n")
    assert main(["anonymize", "--schema", "netflow", "--profile", "bad.profile", "flows.csv"]) == 4
    (work / "main.key").unlink()
    assert main(["anonymize", "--schema", "netflow", "--profile", "students", "flows.csv"]) == 5


def test_anonymize_xml_and_syslog(work, capsys):
    (work / "sys.log").write_text("\n".join(syslog_corpus(20)) + "\n")
    assert main(["anonymize", "--schema", "syslog", "--profile", "research-partner",
                 "--mode", "xml", "--output", "sys.xml", "sys.log"]) == 0
    xml = (work / "sys.xml").read_text()
    assert xml.startswith('<log schema="syslog" source="sys.log"') and xml.count("<record ") == 20


def test_anonymize_parallel_matches_sequential(work):
    args = ["anonymize", "--schema", "netflow", "--profile", "research-partner", "flows.csv"]
    assert main(args + ["--output", "seq.csv"]) == 0
    assert main(args + ["--output", "par.csv", "--workers", "2"]) == 0
    assert (work / "seq.csv").read_bytes() == (work / "par.csv").read_bytes()


def test_attack_direct(work, capsys):
    assert main(["anonymize", "--schema", "netflow", "--profile", "students",
                 "--output", "st.csv", "--truth", "st.truth", "flows.csv"]) == 0
    assert main(["attack", "--schema", "netflow", "--truth", "st.truth", "--attack", "structure",
                 "--hint", "server=192.168.77.29", "--hint", "scan-net=192.168.77.0/24",
                 "--output", "rep.xml", "st.csv"]) == 0
    assert 'name="structure" tp="256" fp="0" targets="256"' in (work / "rep.xml").read_text()
    assert "192.168.77.29" not in (work / "rep.xml").read_text()
    assert main(["anonymize", "--schema", "netflow", "--profile", "public",
                 "--output", "pub.csv", "--truth", "pub.truth", "flows.csv"]) == 0
    assert main(["attack", "--schema", "netflow", "--truth", "pub.truth", "--attack",
                 "fingerprint", "--hint", "server=192.168.77.29", "pub.csv"]) == 6
    assert main(["attack", "--schema", "netflow", "--truth", "missing.tsv", "pub.csv"]) == 3


def test_attack_evaluate_is_deterministic(work):
    args = ["attack", "--evaluate", "--background", "300", "--attack", "fingerprint,propagation"]
    assert main(args + ["--output", "r1.xml"]) == 0
    assert main(args + ["--output", "r2.xml"]) == 0
    r1 = (work / "r1.xml").read_text()
    assert r1 == (work / "r2.xml").read_text()
    assert r1.count("<report ") == 4
    (work / "reports").mkdir()
    assert main(args + ["--output", "reports"]) == 0
    assert sorted(p.name for p in (work / "reports").iterdir()) == [
        "internal.xml", "public.xml", "research-partner.xml", "students.xml"]


def test_parallel_reject_report_matches_sequential(work, capsys):
    lines = (work / "flows.csv").read_text().splitlines()
    lines.insert(5, "broken line")
    (work / "mixed.csv").write_text("\n".join(lines) + "\n")
    args = ["anonymize", "--schema", "netflow", "--profile", "students", "mixed.csv"]
    capsys.readouterr()
    assert main(args + ["--output", "s.csv"]) == 0
    seq_err = capsys.readouterr().err
    assert main(args + ["--output", "p.csv", "--workers", "2"]) == 0
    par_err = capsys.readouterr().err
    assert "mixed.csv:6\twrong column count" in seq_err
    assert seq_err == par_err
    assert (work / "s.csv").read_bytes() == (work / "p.csv").read_bytes()
    assert main(args + ["--output", "x.csv", "--workers", "2", "--strict"]) == 1
