import pytest

from gdmcollab.domain import InvolvedUser
from gdmcollab.ids import IdGenerator, LogicalClock
from gdmcollab.lifecycle import Engine


def make_engine(log=None, **kwargs) -> Engine:
    clock = LogicalClock()
    return Engine(log=log, clock=clock, idgen=IdGenerator(clock, seed=7), **kwargs)


def users(*specs):
    """specs: (user_id, weight, moderator?) or (user_id, weight, moderator, viewpoint)."""
    out = []
    for spec in specs:
        user_id, weight = spec[0], spec[1]
        moderator = spec[2] if len(spec) > 2 else False
        viewpoint = spec[3] if len(spec) > 3 else None
        out.append(InvolvedUser(user_id=user_id, display_name=user_id.title(),
                                is_moderator=moderator, expertise_level=weight,
                                viewpoint=viewpoint))
    return out


@pytest.fixture
def engine():
    return make_engine()


def quick_collab(engine: Engine, *, policy="MajorityDeciding", n_dms=3,
                 threshold_override=None, criteria=None, cid="c1"):
    """Collaboration with moderator 'mod' plus DMs u1..uN, advanced to Elaboration."""
    roster = [("mod", 1, True)] + [(f"u{i}", 1) for i in range(1, n_dms + 1)]
    engine.create_collaboration(users(*roster), collaboration_id=cid)
    engine.define_situation(cid, "mod", "test collaboration")
    engine.choose_method(cid, "mod", policy, threshold_override, criteria)
    engine.notify_actors(cid, "mod")
    return engine.get(cid)
