import pytest

from trajdiff.taskspec import TaskSpec, TaskSpecError, parse_task_spec


def test_full_instruction():
    spec = parse_task_spec("use reach on red_disc avoid kettle")
    assert spec == TaskSpec("reach", ("red_disc",), ("kettle",))


def test_multiple_targets_no_obstacles():
    spec = parse_task_spec("use reach on a,b")
    assert spec.target_labels == ("a", "b")
    assert spec.obstacle_labels == ()


def test_labels_lowercased_and_trimmed():
    spec = parse_task_spec("use Reach on Red_Disc,BLUE_DISC avoid Kettle")
    assert spec.policy_name == "reach"
    assert spec.target_labels == ("red_disc", "blue_disc")
    assert spec.obstacle_labels == ("kettle",)


def test_missing_use_keyword_cites_token():
    with pytest.raises(TaskSpecError, match="'reach'"):
        parse_task_spec("reach red_disc")


def test_missing_on_keyword_cites_token():
    with pytest.raises(TaskSpecError, match="'red_disc'"):
        parse_task_spec("use reach red_disc kettle")


@pytest.mark.parametrize("text", [
    "", "use", "use reach", "use reach on", "use reach on a avoid",
    "use reach on a avoid b extra", "use reach on ,,",
])
def test_malformed_instructions_rejected(text):
    with pytest.raises(TaskSpecError):
        parse_task_spec(text)


def test_overlapping_labels_rejected():
    with pytest.raises(TaskSpecError, match="both target and obstacle"):
        parse_task_spec("use reach on cup avoid cup")
