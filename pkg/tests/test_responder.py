import pytest
from hypothesis import given, strategies as st

from llmcomm.protocol import DISCLOSURE_LINE, Message
from llmcomm.responder import (
    Fact,
    PersonalModel,
    ResponderError,
    ServiceProfile,
    answerable,
    generate,
    learn,
    merge_facts,
    service_time,
)

DEFAULTS = ServiceProfile()


def ask(topic, sender="A", owner="C", i=1):
    return Message(i, sender, owner, topic, f"{sender} asks about {topic}", 512, 0.0)


def model(version=1, **facts):
    return PersonalModel("C", version, facts=facts or {"lunch": Fact.public("Noon works")})


def test_answerable_visibility():
    m = PersonalModel("C", facts={
        "lunch": Fact.public("Noon"),
        "project": Fact.for_group("On track", {"B"}),
        "health": Fact.private("Fine"),
    })
    assert answerable(m, "lunch", "A")
    assert not answerable(m, "weekend", "A")
    assert not answerable(m, "project", "A")
    assert answerable(m, "project", "B")
    assert not answerable(m, "health", "B")
    assert answerable(m, "health", "C")  # owner sees everything


def test_generate_examples():
    r = generate(model(), ask("lunch"))
    assert r.body == "Noon works\n[This is an AI-generated message]"
    assert generate(model(version=7), ask("lunch")).model_version == 7
    with pytest.raises(ResponderError):
        generate(model(), ask("weekend"))


def test_generate_wrong_owner():
    with pytest.raises(ResponderError):
        generate(model(), ask("lunch", owner="B"))


def test_learn_new_and_existing_topic():
    m3 = model(version=3)
    new = learn(m3, "weekend", "Hiking", "B")
    assert new.version == 4 and len(new.facts) == len(m3.facts) + 1
    upd = learn(m3, "lunch", "1pm now", "B")
    assert upd.version == 4 and len(upd.facts) == len(m3.facts)
    assert m3.version == 3 and m3.facts["lunch"].response == "Noon works"  # original untouched


def test_learn_then_answerable_for_asker_only():
    new = learn(model(), "weekend", "Hiking", "B")
    assert answerable(new, "weekend", "B")
    assert not answerable(new, "weekend", "A")


def test_learn_empty_reply():
    with pytest.raises(ResponderError):
        learn(model(), "t", "", "B")


def test_merge_facts_bumps_version():
    m = merge_facts(model(), {"x": Fact.public("y")})
    assert m.version == 2 and set(m.facts) == {"lunch", "x"}


@pytest.mark.parametrize("stages,cold,expected", [
    ({"text"}, True, 16.26),
    ({"text", "tts"}, True, 16.70),
    ({"text"}, False, 9.64),
    ({"tts"}, True, 0.44),
    ({"tts"}, False, 0.18),
])
def test_service_time_table(stages, cold, expected):
    assert service_time(DEFAULTS, stages, cold) == expected


def test_service_time_rejects_bad_stages():
    with pytest.raises(ResponderError):
        service_time(DEFAULTS, set(), True)
    with pytest.raises(ResponderError):
        service_time(DEFAULTS, {"video"}, True)


times = st.floats(min_value=0, max_value=100, allow_nan=False)


@given(times, times, times, times, st.booleans())
def test_service_time_additive(load, proc, tload, tproc, cold):
    p = ServiceProfile(load, proc, tload, tproc)
    both = service_time(p, {"text", "tts"}, cold)
    parts = service_time(p, {"text"}, cold) + service_time(p, {"tts"}, cold)
    assert both == pytest.approx(parts, abs=1e-8)
    assert service_time(p, {"text"}, True) >= service_time(p, {"text"}, False)


@given(st.text(min_size=1, max_size=40), st.sampled_from(["A", "B"]))
def test_generated_bodies_carry_note(text, sender):
    m = PersonalModel("C", facts={"t": Fact.public(text)})
    body = generate(m, ask("t", sender=sender)).body
    assert body.endswith("\n" + DISCLOSURE_LINE)
