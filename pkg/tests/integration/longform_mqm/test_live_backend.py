"""Round trip against a real chat-completion endpoint; needs OPENAI_API_KEY."""

import os

import pytest

from longform_mqm.backends import LiveBackend
from longform_mqm.config import BackendConfig
from longform_mqm.models import EvalRequest, EvalUnit, Granularity, ParseStatus, PromptFamily, PromptOptions
from longform_mqm.parsing import parse_mqm_response
from longform_mqm.prompting import render_gemba

pytestmark = pytest.mark.skipif(not os.getenv("OPENAI_API_KEY"), reason="OPENAI_API_KEY not set")


@pytest.mark.asyncio
async def test_live_gemba_response_parses():
    unit = EvalUnit(
        unit_id="seg/en-de/live#0/sys",
        granularity=Granularity.SEG,
        system_id="sys",
        lp="en-de",
        src="The weather is nice today.",
        tgt="Das Wetter ist heute schlecht.",
    )
    opts = PromptOptions(family=PromptFamily.GEMBA, n_shots=3, with_explanations=True, with_da=True)
    bundle = render_gemba(unit, opts)
    backend = LiveBackend(BackendConfig(kind="live", model=os.getenv("LONGFORM_MQM_MODEL", "gpt-4o-mini")))

    response = await backend.generate(EvalRequest(request_id=unit.unit_id, unit_id=unit.unit_id, bundle=bundle))

    parsed = parse_mqm_response(response.text, expects_da=True)
    assert parsed.parse_status != ParseStatus.FAILED
    assert response.output_tokens > 0
