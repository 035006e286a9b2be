import numpy as np
import pytest
from hypothesis import given

from hlplan.core import (Behavior, DrivingSituation, FrenetState, HumanDrivingSample, Lane, Trajectory,
                         situation_from_dict, situation_to_dict, validate_sample, validate_situation)

from conftest import make_situation, situations


def test_lane_and_behavior_mapping():
    assert [b.lane for b in Behavior] == [Lane.LEFT, Lane.CURRENT, Lane.RIGHT]
    for lane in Lane:
        assert Behavior.from_lane(lane).lane is lane
    assert Lane.LEFT.offset_sign == 1 and Lane.RIGHT.offset_sign == -1


def test_road_flag_controls_lanes():
    assert make_situation(road=-1).available_lanes() == [Lane.RIGHT, Lane.CURRENT]
    assert make_situation(road=1).available_lanes() == [Lane.CURRENT, Lane.LEFT]
    assert len(make_situation(road=0).available_lanes()) == 3


def test_validate_situation_reports_problems():
    assert validate_situation(make_situation()) == []
    assert "ego speed below 8 m/s" in validate_situation(make_situation(vs=5.0))
    bad = make_situation(road=-1, lf=(20.0, 3.5, 15.0))
    assert any("left lane marked absent" in p for p in validate_situation(bad))
    assert any("road flag" in p for p in validate_situation(make_situation(road=2)))
    assert any("not finite" in p for p in validate_situation(make_situation(cf=(np.nan, 0.0, 1.0))))


def test_trajectory_is_read_only():
    t = Trajectory(0.1, np.zeros((3, 6)))
    with pytest.raises(ValueError):
        t.points[0, 0] = 1.0
    with pytest.raises(ValueError):
        Trajectory(0.1, np.zeros((3, 5)))
    with pytest.raises(ValueError):
        Trajectory(0.0, np.zeros((3, 6)))


def test_validate_sample_label_and_start():
    sit = make_situation(vs=10.0)
    pts = np.zeros((11, 6))
    pts[:, 0] = np.linspace(0, 10, 11)
    pts[:, 2] = 10.0
    pts[:, 1] = np.linspace(0, 3.5, 11)
    sample = HumanDrivingSample("a", sit, Trajectory(0.1, pts), Behavior.LLC)
    assert validate_sample(sample) == []
    wrong = HumanDrivingSample("b", sit, Trajectory(0.1, pts), Behavior.CF)
    assert any("inconsistent" in p for p in validate_sample(wrong))
    shifted = pts.copy()
    shifted[0, 0] = 1.0
    moved = HumanDrivingSample("c", sit, Trajectory(0.1, shifted), Behavior.LLC)
    assert any("first point" in p for p in validate_sample(moved))


@given(situations())
def test_situation_dict_round_trip(sit):
    back = situation_from_dict(situation_to_dict(sit))
    assert back == sit
    assert hash(back) == hash(sit)


def test_situation_from_dict_rejects_unknown_slot():
    data = situation_to_dict(make_situation())
    data["env"]["xx"] = None
    with pytest.raises(ValueError):
        situation_from_dict(data)
