import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reidgallery.embedstore import EmbeddingMatrix
from reidgallery.gallery import (
    BindingError,
    Cumulative,
    ExperimentStep,
    Fixed,
    GalleryState,
    PolicyError,
    Rolling,
    advance,
    build_gallery,
    plan_schedule,
    policy_from_dict,
)
from reidgallery.manifest import ImageRecord, Perspective, RecordingSchedule, select_day

SCHEDULE_15 = RecordingSchedule.from_labels(
    [f"{d:02d}" for d in range(1, 15)] + ["14a"], damage_labels=["14a"]
)


def make_records(num_days, num_entities=60, views=3):
    records = []
    for day in range(1, num_days + 1):
        for e in range(num_entities):
            for v in list(Perspective)[:views]:
                records.append(
                    ImageRecord(f"e{e}_{v.value}_{day}", e, v, day, f"{day:02d}", False, len(records))
                )
    return records


def matrix_for(records, dim=4):
    rng = np.random.default_rng(0)
    data = rng.standard_normal((len(records), dim)).astype(np.float32)
    return EmbeddingMatrix(data, [r.image_id for r in records])


def test_fixed_plan():
    steps = plan_schedule(Fixed({1, 2}), SCHEDULE_15)
    assert len(steps) == 13
    assert [s.query_day for s in steps] == list(range(3, 16))
    assert all(s.gallery_days == (1, 2) for s in steps)


def test_cumulative_plan():
    steps = plan_schedule(Cumulative(1), SCHEDULE_15)
    assert len(steps) == 14
    assert steps[0] == ExperimentStep((1,), 2)
    assert steps[-1] == ExperimentStep(tuple(range(1, 15)), 15)


def test_rolling_plan():
    steps = plan_schedule(Rolling(1), SCHEDULE_15)
    assert len(steps) == 14
    assert all(s.gallery_days == (s.query_day - 1,) for s in steps)
    wide = plan_schedule(Rolling(3), SCHEDULE_15)
    assert wide[0].gallery_days == (1,)
    assert wide[5].gallery_days == (4, 5, 6)


def test_plan_errors():
    with pytest.raises(PolicyError):
        plan_schedule(Fixed({1, 15}), SCHEDULE_15)
    with pytest.raises(PolicyError):
        plan_schedule(Cumulative(1), RecordingSchedule.from_labels(["01"]))
    with pytest.raises(PolicyError):
        Fixed(set())
    with pytest.raises(PolicyError):
        Rolling(0)


def test_build_gallery_two_days():
    records = make_records(15)
    m = matrix_for(records)
    state = build_gallery(records, m, ExperimentStep((1, 2), 3))
    assert len(state) == 360
    assert state.enrolled_days == (1, 2)


def test_build_gallery_manifest_order():
    records = make_records(2, num_entities=1)
    m = matrix_for(records)
    state = build_gallery(records, m, ExperimentStep((1,), 2))
    assert state.image_ids == [r.image_id for r in records if r.day_index == 1]


def test_build_gallery_binding_error():
    records = make_records(2, num_entities=1)
    m = matrix_for(records[:4])
    with pytest.raises(BindingError, match=records[4].image_id):
        build_gallery(records, m, ExperimentStep((1, 2), 3))


def test_advance_rolling():
    records = make_records(6, num_entities=2)
    state = GalleryState((4,), (), 4)
    state = advance(state, Rolling(1), select_day(records, 5))
    assert state.enrolled_days == (5,)
    assert {r.day_index for r in state.rows} == {5}


def test_advance_cumulative():
    records = make_records(3, num_entities=2)
    state = GalleryState()
    for d in (1, 2):
        state = advance(state, Cumulative(1), select_day(records, d))
    assert state.enrolled_days == (1, 2)
    state = advance(state, Cumulative(1), select_day(records, 3))
    assert state.enrolled_days == (1, 2, 3)


def test_advance_fixed_ignores_new_days():
    records = make_records(3, num_entities=2)
    state = GalleryState()
    for d in (1, 2):
        state = advance(state, Fixed({1, 2}), select_day(records, d))
    after = advance(state, Fixed({1, 2}), select_day(records, 3))
    assert after.enrolled_days == (1, 2)
    assert after.rows == state.rows


def test_advance_out_of_order():
    records = make_records(3, num_entities=1)
    state = advance(GalleryState(), Cumulative(1), select_day(records, 2))
    with pytest.raises(PolicyError):
        advance(state, Cumulative(1), select_day(records, 1))
    with pytest.raises(PolicyError):
        advance(state, Cumulative(1), [], day_index=2)


POLICIES = st.one_of(
    st.builds(Cumulative, st.integers(1, 4)),
    st.builds(Rolling, st.integers(1, 5)),
    st.sets(st.integers(1, 4), min_size=1).map(Fixed),
)


@settings(max_examples=80, deadline=None)
@given(POLICIES, st.integers(5, 9))
def test_incremental_batch_agreement(policy, num_days):
    records = make_records(num_days, num_entities=3, views=2)
    m = matrix_for(records)
    steps = {s.query_day: s for s in plan_schedule(policy, num_days)}
    state = GalleryState()
    sizes = []
    for day in range(1, num_days + 1):
        if day in steps:
            step = steps[day]
            assert step.query_day not in step.gallery_days
            assert state == build_gallery(records, m, step)
            assert not set(state.image_ids) & {r.image_id for r in select_day(records, day)}
            sizes.append(len(state))
            if isinstance(policy, Rolling):
                assert len(state.enrolled_days) <= policy.window
            if isinstance(policy, Cumulative):
                assert state.enrolled_days == tuple(range(policy.start_day, day))
        state = advance(state, policy, select_day(records, day))
    if isinstance(policy, Cumulative):
        assert sizes == sorted(sizes)


def test_policy_from_dict():
    assert policy_from_dict({"kind": "fixed", "days": [1, 2]}) == Fixed({1, 2})
    assert policy_from_dict({"kind": "cumulative"}) == Cumulative(1)
    assert policy_from_dict({"kind": "rolling", "window": 2}) == Rolling(2)
    with pytest.raises(PolicyError):
        policy_from_dict({"kind": "lru"})
