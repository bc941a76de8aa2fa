import numpy as np
import pytest

from agentrouter.dataio import DatasetRecord, default_profiles
from agentrouter.extract import EntityMention, RelationTriple

FALCON_CONTEXT = (
    'Title: The Falcon Takes Over. The Falcon Takes Over (also known as "The Falcon Steps Out") is a 1942 '
    "black-and-white mystery film directed by Irving Reis. The B film was the third, following "
    '"The Gay Falcon" and "A Date with the Falcon" (1941), to star George Sanders as the character '
    'Gay Lawrence, a gentleman detective known by the sobriquet "the Falcon".'
)


@pytest.fixture
def falcon_record():
    return DatasetRecord(
        id="falcon-0",
        question="Who is known as 'the Falcon'?",
        context=FALCON_CONTEXT,
        gold_answers=("Gay Lawrence",),
        source_dataset="hotpotqa",
    )


@pytest.fixture(scope="session")
def profiles():
    return default_profiles()


@pytest.fixture
def tiny_parts():
    """Hand-made record, 3 mentions, 1 triple and 2 agent profiles."""
    rec = DatasetRecord("tiny-0", "Where did Ada Byron work?", "Ada Byron worked with Charles Babbage in London.",
                        ("London",), "toy")
    mentions = [
        EntityMention("Ada Byron", "named", 1, [(0, 9)]),
        EntityMention("Charles Babbage", "named", 1, [(22, 37)]),
        EntityMention("London", "named", 1, [(41, 47)]),
    ]
    triples = [RelationTriple("Ada Byron", "prep:with", "Charles Babbage", (0, 37))]
    profs = default_profiles()[:2]
    amap = {profs[0].agent_id: {"Ada Byron"}, profs[1].agent_id: {"Charles Babbage", "London"}}
    return rec, mentions, triples, profs, amap


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fixture_cfg():
    from agentrouter.synthetic import fixture_dir
    return fixture_dir() / "fixture.cfg"


@pytest.fixture(scope="session")
def trained_fixture(tmp_path_factory, fixture_cfg):
    """One three-seed training run on the bundled fixture, shared across tests."""
    from agentrouter.cli import main
    out = tmp_path_factory.mktemp("fixture-train")
    assert main(["train", "--config", str(fixture_cfg), "--out", str(out)]) == 0
    return out


# (criterion, title, passed, detail) rows reported by the acceptance suite
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, title, passed, detail in sorted(ACCEPTANCE):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status} criterion {n}: {title}" + (f" ({detail})" if detail else ""))
