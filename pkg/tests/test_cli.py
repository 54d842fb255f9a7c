import json
import os
import socket
import subprocess
import sys
from pathlib import Path

import pytest

from rule_responder.broker import BrokerConfig, start
from rule_responder.cli import main
from rule_responder.usecase import BUNDLE_DIR, topology

from test_broker import Peer

ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture(scope="module")
def running():
    with topology(transport="tcp") as (brk, agents):
        yield brk


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_query_expert(running, capsys):
    code, out, _ = run(capsys, "query", "--broker", running.address_text, "--target", "hcls_org", 'expert(P,"ADDLs").')
    assert code == 0
    assert out == 'P="william_klein"\n-- 1 answers\n'


def test_query_output_is_stable(running, capsys):
    outs = {run(capsys, "query", "--broker", running.address_text, "expert(P,F).")[1] for _ in range(3)}
    assert outs == {'P="william_klein", F="ADDLs"\nP="maria_garcia", F="tau_protein"\n-- 2 answers\n'}


def test_query_max_answers(running, capsys):
    code, out, _ = run(capsys, "query", "--broker", running.address_text, "--max-answers", "1", "expert(P,F).")
    assert code == 0
    assert out.splitlines() == ['P="william_klein", F="ADDLs"', "-- 1 answers"]


def test_query_ground_answer_prints_true(running, capsys):
    args = ("query", "--broker", running.address_text, "--target", "patent_agent")
    assert run(capsys, *args, 'has_patent("william_klein","ADDLs").')[1] == "true\n-- 1 answers\n"
    assert run(capsys, *args, 'has_patent("jane_doe","ADDLs").')[1] == "-- 0 answers\n"


def test_query_unknown_agent(running, capsys):
    code, out, _ = run(capsys, "query", "--broker", running.address_text, "--target", "nobody", "p(X).")
    assert code == 3
    assert out == 'error(unknown_receiver,"nobody")\n'


def test_query_not_exported(running, capsys):
    code, out, _ = run(capsys, "query", "--broker", running.address_text, "--target", "pubmed_agent", "publication(A,T,F,L).")
    assert code == 3
    assert out == 'error(not_exported,"publication/4")\n'


def test_query_client_timeout(capsys):
    with start(BrokerConfig(timeout_ms=5000)) as brk:
        silent = Peer(brk)
        silent.register("silent")
        code, out, err = run(capsys, "query", "--broker", brk.address_text, "--target", "silent", "--timeout-ms", "200", "p(X).")
    assert code == 4
    assert "200 ms" in err


def test_query_broker_timeout(capsys):
    with start(BrokerConfig(timeout_ms=100)) as brk:
        silent = Peer(brk)
        silent.register("silent")
        code, out, _ = run(capsys, "query", "--broker", brk.address_text, "--target", "silent", "p(X).")
    assert code == 4
    assert out.startswith("error(timeout,")


def test_query_bad_text_and_no_broker(capsys):
    assert run(capsys, "query", "--broker", "127.0.0.1:1", "p(X")[0] == 2
    code, _, err = run(capsys, "query", "--broker", _free_address(), "p(X).")
    assert code == 2 and "cannot connect" in err


def test_query_uses_environment_broker(running, capsys, monkeypatch):
    monkeypatch.setenv("RR_BROKER", running.address_text)
    assert run(capsys, "query", 'drug_target(T,"alzheimer").')[1] == 'T="ADDLs"\n-- 1 answers\n'


def test_broker_address_in_use(running, capsys):
    code, _, err = run(capsys, "broker", "--listen", running.address_text)
    assert code == 2 and "address in use" in err


def test_broker_zero_timeout(capsys):
    code, _, err = run(capsys, "broker", "--timeout-ms", "0")
    assert code == 2 and "timeout" in err


def test_agent_missing_rulebase(tmp_path, capsys):
    cfg = tmp_path / "a.json"
    cfg.write_text(json.dumps({"name": "a", "role": "source", "rulebase_path": "missing.rr"}))
    code, _, err = run(capsys, "agent", "--config", str(cfg))
    assert code == 2 and "rulebase_path" in err


def test_agent_unparsable_config(tmp_path, capsys):
    cfg = tmp_path / "a.json"
    cfg.write_text('{\n  "name": "a",\n  "role" "source"\n}')
    code, _, err = run(capsys, "agent", "--config", str(cfg))
    assert code == 2 and "line 3 column 10" in err


def test_agent_without_broker(capsys):
    code, _, err = run(capsys, "agent", "--config", str(BUNDLE_DIR / "kb_agent.json"), "--broker", _free_address())
    assert code == 2 and "cannot connect" in err


def test_trace_empty_file(tmp_path, capsys):
    path = tmp_path / "t.log"
    path.write_bytes(b"")
    assert run(capsys, "trace", str(path)) == (0, "", "")


def test_trace_dump_and_corruption(tmp_path, capsys):
    good = b'12.5\tin\tmsg("c1",client,hcls_org,query,expert(P,"ADDLs"))\n'
    path = tmp_path / "t.log"
    path.write_bytes(good)
    code, out, _ = run(capsys, "trace", str(path))
    assert code == 0
    assert out == '12.5\tin\tquery\tclient->hcls_org\texpert(P,"ADDLs")\n'
    path.write_bytes(good + b"13.0\tout\tmsg(broken\n")
    code, out, err = run(capsys, "trace", str(path))
    assert code == 2
    assert f"byte offset {len(good)}" in err
    path.write_bytes(b"not a record\n")
    assert run(capsys, "trace", str(path))[0] == 2
    assert run(capsys, "trace", str(tmp_path / "absent.log"))[0] == 2


def _free_address():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return "127.0.0.1:%d" % s.getsockname()[1]


def test_demo_script(tmp_path):
    """The shipped demo, run as real processes through the CLI."""
    env = dict(os.environ)
    env.update(
        PORT=_free_address().rsplit(":", 1)[1],
        RR=f"{sys.executable} -m rule_responder",
        TRACE=str(tmp_path / "demo.trace"),
        PYTHONPATH=str(ROOT / "src") + os.pathsep + env.get("PYTHONPATH", ""),
    )
    proc = subprocess.run(
        ["bash", str(ROOT / "usecase" / "demo.sh")], env=env, capture_output=True, text=True, timeout=60,
    )
    assert proc.returncode == 0, proc.stderr
    out = proc.stdout
    assert 'T="ADDLs"\n-- 1 answers' in out
    assert 'P="william_klein"\n-- 1 answers' in out
    assert 'L="evanston"\n-- 1 answers' in out
    assert 'P="william_klein", N=2\n-- 1 answers' in out
    records = (tmp_path / "demo.trace").read_bytes().splitlines()
    assert len(records) >= 8
    assert sum(b"\tin\tmsg(" in r and b",register," in r for r in records) >= 4
