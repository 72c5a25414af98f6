from pivad.entities.base_runner import PivadBaseRunner
from pivad.entities.entities import RunnerStatus


def test_local_and_global_listeners():
    runner = PivadBaseRunner(rid="r1")
    local, everything = [], []
    runner.on("tick", local.append)
    runner.on_any(everything.append)

    runner.emit("tick", {"n": 1})
    runner.emit("tock")
    assert [e["data"] for e in local] == [{"n": 1}]
    assert [e["type"] for e in everything] == ["tick", "tock"]
    assert all(e["source"] == "r1" for e in everything)
    assert everything[1]["data"] == {}

    runner.off("tick", local.append)
    runner.off_any(everything.append)
    runner.emit("tick", {"n": 2})
    assert len(local) == 1 and len(everything) == 2


def test_removing_unknown_listener_is_a_no_op():
    runner = PivadBaseRunner()
    runner.off("nothing", print)
    runner.off_any(print)
    assert runner.rid.startswith("runner_")


def test_status_changes_are_emitted():
    runner = PivadBaseRunner(rid="r2")
    events = []
    runner.on("status_changed", events.append)
    runner.set_status(RunnerStatus.WORKING, stage="warmup")
    runner.set_status(RunnerStatus.COMPLETED)
    assert runner.status == RunnerStatus.COMPLETED
    assert events[0]["data"] == {
        "previous_status": RunnerStatus.INITIATED,
        "current_status": RunnerStatus.WORKING,
        "stage": "warmup",
    }
    assert events[1]["data"]["previous_status"] == RunnerStatus.WORKING
