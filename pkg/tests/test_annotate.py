import json

import pytest

from latefuse.annotate import (
    AnnotateError, AuditLog, HttpTransport, JudgeVerdict, MockTransport,
    TransportError, generate_query, judge_quality, parse_verdict, prompt_hash,
    render_judge_prompt, render_query_prompt,
)
from latefuse.corpus import Document

DOC = Document(id="d1", domain="wiki", texts=["first block", "second block"],
               images=["img/a.png"], queries=[])


class TestPrompts:
    def test_query_prompt_embeds_document(self):
        messages = render_query_prompt(DOC)
        assert [m.role for m in messages] == ["system", "user"]
        assert "first block\nsecond block" in messages[1].content
        assert "[image: img/a.png]" in messages[1].content
        assert "Begin your output with 'Q:'" in messages[1].content

    def test_query_prompt_requires_content(self):
        with pytest.raises(ValueError, match="text"):
            render_query_prompt(Document(id="d", domain="wiki", texts=[],
                                         images=["i"]))
        with pytest.raises(ValueError, match="image"):
            render_query_prompt(Document(id="d", domain="wiki", texts=["t"],
                                         images=[]))

    def test_judge_prompt_embeds_text(self):
        messages = render_judge_prompt("sample paragraph")
        assert "Text: sample paragraph" in messages[1].content
        assert "generous language quality classifier" in messages[0].content

    def test_prompt_hash_is_stable_and_sensitive(self):
        a = prompt_hash(render_query_prompt(DOC))
        assert a == prompt_hash(render_query_prompt(DOC))
        other = Document(id="d2", domain="wiki", texts=["x"], images=["i"])
        assert a != prompt_hash(render_query_prompt(other))


class TestGenerateQuery:
    def test_strips_marker(self):
        client = MockTransport(["Q: What drives the trend?"])
        assert generate_query(DOC, client) == "What drives the trend?"

    def test_marker_after_leading_whitespace(self):
        client = MockTransport(["\n  Q:  spaced out?  "])
        assert generate_query(DOC, client) == "spaced out?"

    def test_missing_marker_raises(self):
        client = MockTransport(["no marker here"])
        with pytest.raises(AnnotateError, match="marker"):
            generate_query(DOC, client)

    def test_retry_with_exponential_backoff(self):
        delays = []
        client = MockTransport([TransportError("503"), TransportError("503"),
                                "Q: third time works"])
        out = generate_query(DOC, client, sleep=delays.append)
        assert out == "third time works"
        assert delays == [1.0, 2.0]

    def test_gives_up_after_three_attempts(self):
        delays = []
        client = MockTransport([TransportError("x")] * 3)
        with pytest.raises(TransportError):
            generate_query(DOC, client, sleep=delays.append)
        assert len(client.calls) == 3 and delays == [1.0, 2.0]


class TestParseVerdict:
    @pytest.mark.parametrize("raw,answer,warn", [
        ("Yes", "yes", False),
        ("no", "no", False),
        ("  Yes.", "yes", False),
        ("'No'", "no", False),
        ("Well, yes, it reads fine", "yes", False),
        ("cannot tell", "no", True),
        ("", "no", True),
    ])
    def test_first_token_decides(self, raw, answer, warn):
        v = parse_verdict(raw)
        assert (v.answer, v.parse_warning) == (answer, warn)

    def test_judge_quality_end_to_end(self):
        client = MockTransport(["Yes"])
        v = judge_quality("clean text", client)
        assert v == JudgeVerdict(answer="yes", raw_response="Yes")


class TestAudit:
    def test_records_exchanges(self, tmp_path):
        path = tmp_path / "audit.jsonl"
        client = MockTransport(["Q: logged?", "No"])
        with AuditLog(path) as audit:
            generate_query(DOC, client, audit=audit)
            judge_quality("junk", client, audit=audit, doc_id="d1")
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        assert len(lines) == 2
        assert lines[0]["parsed_result"] == "logged?"
        assert lines[0]["prompt_hash"] == prompt_hash(render_query_prompt(DOC))
        assert lines[1]["parsed_result"] == "no"
        assert all("timestamp" in l and "raw_response" in l for l in lines)

    def test_failed_parse_still_audited(self, tmp_path):
        path = tmp_path / "audit.jsonl"
        client = MockTransport(["bad response"])
        with AuditLog(path) as audit:
            with pytest.raises(AnnotateError):
                generate_query(DOC, client, audit=audit)
        entry = json.loads(path.read_text())
        assert entry["parsed_result"] is None


class TestTransports:
    def test_mock_exhaustion(self):
        client = MockTransport([])
        with pytest.raises(TransportError, match="exhausted"):
            client.complete(render_judge_prompt("x"))

    def test_http_requires_endpoint(self, monkeypatch):
        monkeypatch.delenv("LATEFUSE_LLM_ENDPOINT", raising=False)
        with pytest.raises(AnnotateError, match="LATEFUSE_LLM_ENDPOINT"):
            HttpTransport()

    def test_http_reads_environment(self, monkeypatch):
        monkeypatch.setenv("LATEFUSE_LLM_ENDPOINT", "http://llm.local/v1")
        monkeypatch.setenv("LATEFUSE_LLM_MODEL", "judge-1")
        monkeypatch.setenv("LATEFUSE_LLM_TIMEOUT", "7.5")
        t = HttpTransport()
        assert t.endpoint == "http://llm.local/v1"
        assert t.model == "judge-1"
        assert t.timeout == 7.5
