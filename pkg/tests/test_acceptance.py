"""Acceptance criteria, one test each.

Every test prints (and records for the terminal summary) a single line
``PASS|FAIL <n> <title> (<seconds> s)``.  Run alone with
``pytest tests/test_acceptance.py -v``; criterion 7 then only times the
tests that ran in the same session.
"""

import random
import time
from contextlib import contextmanager
from pathlib import Path

import conftest
import test_broker as broker_tests
from helpers import random_message, random_term
from rule_responder.agents import merge_agents
from rule_responder.broker import BrokerConfig, start
from rule_responder.engine import check_stratified, solve
from rule_responder.lang import parse_program, parse_term, serialize_term
from rule_responder.messaging import decode, encode
from rule_responder.terms import Str
from rule_responder.usecase import BUNDLE_DIR, client_for, generate_bundle, load_bundle, topology
from test_engine import run_oracle_comparison
from test_messaging import GOLDEN, GOLDEN_MESSAGES


@contextmanager
def criterion(n: int, title: str, budget: float | None = None):
    t0 = time.monotonic()
    status, note = "FAIL", ""
    try:
        yield
        elapsed = time.monotonic() - t0
        if budget is not None and elapsed >= budget:
            note = f" over budget {budget:g} s"
            raise AssertionError(f"criterion {n} took {elapsed:.2f} s, budget {budget:g} s")
        status = "PASS"
    except BaseException as e:
        if not note:
            note = f" {type(e).__name__}: {str(e).splitlines()[0][:120] if str(e) else ''}"
        raise
    finally:
        line = f"{status} {n} {title} ({time.monotonic() - t0:.2f} s){note if status == 'FAIL' else ''}"
        conftest.ACCEPTANCE[n] = line
        print(line)


# --------------------------------------------------------------------------


def test_criterion_1_use_case_reproduction():
    with criterion(1, "use-case reproduction over TCP", budget=10):
        with topology(transport="tcp") as (brk, agents):
            assert sorted(brk.registered()) == ["hcls_org", "kb_agent", "patent_agent", "pubmed_agent"]
            with client_for(brk, "tcp") as client:
                expert = client.query("hcls_org", 'expert(P,"ADDLs").')
                assert expert.status == "complete"
                assert expert.answers == [{"P": Str("william_klein")}]
                loc = client.query("pubmed_agent", 'top_location("ADDLs",L).')
                assert loc.answers == [{"L": Str("evanston")}]
                org_loc = client.query("hcls_org", 'research_location("ADDLs",L).')
                assert org_loc.answers == [{"L": Str("evanston")}]
                pats = client.query("patent_agent", 'patent_count("william_klein","ADDLs",N).')
                assert [serialize_term(a["N"]) for a in pats.answers] == ["2"]
                org_pats = client.query("hcls_org", 'expert_patents(P,"ADDLs",N).')
                assert [(a["P"].value, serialize_term(a["N"])) for a in org_pats.answers] == [("william_klein", "2")]


def _random_queries(bundle, rng, n):
    fields = bundle.fields + ["no_such_field"]
    authors = bundle.authors + ["no_such_person"]
    templates = [
        (1, "hcls_org", lambda: "expert(P,F)."),
        (4, "hcls_org", lambda: f'expert(P,"{rng.choice(fields)}").'),
        (4, "hcls_org", lambda: f'expert("{rng.choice(authors)}",F).'),
        (3, "hcls_org", lambda: f'expert("{rng.choice(authors)}","{rng.choice(fields)}").'),
        (1, "hcls_org", lambda: "research_location(F,L)."),
        (4, "hcls_org", lambda: f'research_location("{rng.choice(fields)}",L).'),
        (3, "hcls_org", lambda: f'expert_patents(P,"{rng.choice(fields)}",N).'),
        (2, "hcls_org", lambda: rng.choice(['drug_target(T,"alzheimer").', "drug_target(T,D).", 'drug_target("ADDLs",D).'])),
        (2, "pubmed_agent", lambda: f'top_author("{rng.choice(fields)}",A).'),
        (2, "patent_agent", lambda: f'patent_count("{rng.choice(authors)}",F,N).'),
    ]
    weights = [w for w, _, _ in templates]
    for _ in range(n):
        _, target, make = rng.choices(templates, weights)[0]
        yield target, make()


def _answer_set(answers):
    return {tuple(sorted((k, serialize_term(v)) for k, v in a.items())) for a in answers}


def _transparency(root, rng, n):
    bundle = load_bundle(root)
    rb, remote = merge_agents(list(bundle.configs.values()))
    queries = list(_random_queries(bundle, rng, n))
    checked = nonempty = 0
    with topology(root, transport="tcp") as (brk, _):
        with client_for(brk, "tcp") as client:
            for target, q in queries:
                dist = client.query(target, q, timeout_ms=20000)
                assert dist.status == "complete", (q, dist.status, dist.error)
                merged = list(solve(rb, q, remote=remote))
                assert _answer_set(dist.answers) == _answer_set(merged), q
                checked += 1
                nonempty += bool(merged)
    return checked, nonempty


def test_criterion_2_delegation_transparency(tmp_path):
    with criterion(2, "delegation transparency, distributed = merged", budget=30):
        rng = random.Random(2008)
        shipped = _transparency(BUNDLE_DIR, rng, 50)
        generated = _transparency(generate_bundle(tmp_path / "gen", seed=2008, n_authors=100), rng, 50)
        assert shipped[0] == generated[0] == 50
        # the comparison is not vacuous
        assert shipped[1] >= 15 and generated[1] >= 15, (shipped, generated)


def test_criterion_3_engine_oracle_equivalence():
    with criterion(3, "engine = bottom-up oracle on 200 programs", budget=30):
        assert run_oracle_comparison(200, seed=4242) == []


def test_criterion_4_codec():
    with criterion(4, "codec round trip and golden bytes"):
        rng = random.Random(99)
        for _ in range(1000):
            m = random_message(rng)
            assert decode(encode(m)) == m
        files = sorted(GOLDEN.glob("*.msg"))
        assert len(files) >= 10
        for path in files:
            m = GOLDEN_MESSAGES[path.name]
            assert encode(m) == path.read_bytes(), path.name
            assert decode(path.read_bytes()) == m


def test_criterion_5_broker_properties():
    with criterion(5, "broker transport equivalence, timeout window, delivery_failed"):
        assert broker_tests._scenario("inproc") == broker_tests._scenario("tcp")
        broker_tests.test_timeout_window()
        brk = start(BrokerConfig())
        try:
            broker_tests.test_delivery_failed_after_socket_close(brk)
        finally:
            brk.stop()


def test_criterion_6_parser():
    with criterion(6, "parser round trip; shipped rule bases parse and stratify"):
        rng = random.Random(6)
        for _ in range(1000):
            t = random_term(rng)
            assert parse_term(serialize_term(t)) == t
        rulebases = sorted(Path(BUNDLE_DIR).glob("*.rr"))
        assert len(rulebases) == 4
        for path in rulebases:
            assert check_stratified(parse_program(path.read_text(encoding="utf-8"))), path.name


def test_criterion_7_suite_runtime():
    elapsed = time.monotonic() - conftest.SESSION_START
    with criterion(7, f"full suite under 60 s, session took {elapsed:.1f} s"):
        assert elapsed < 60, f"suite took {elapsed:.1f} s"
