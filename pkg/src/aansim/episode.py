"""End-to-end episode engine.

``run_episode`` plays one medication-assistance session to completion: it
places the bottle, builds the world, and pumps events between the user
model, the navigation stack, and the guidance orchestrator on a shared
simulated clock.  Everything stochastic draws from named per-seed streams,
so a (scenario, condition, seed) triple replays byte-identically.  The
result carries the canonical session log plus the synthesized gaze stream
and the confusion events detected in it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from . import navigation, seeding, usersim, world
from .orchestrator import (
    Action,
    ActionKind,
    AssistEvent,
    EventKind,
    GuidanceStep,
    OrchestratorConfig,
    OrchestratorState,
    Phase,
    initial_state,
    step as orchestrator_step,
)
from .scenario import Scenario
from .session import LOG_FORMAT, SessionLog
from .usersim import ConfusionEvent, GazeSample, GazeTimeline, GazeWindow, Prompt

logger = logging.getLogger(__name__)

_ATTENTION_SPAN_S = 4.0
_BOTTLE_SPAN_S = 8.0
_ACTION_TO_CONFIRM_S = 1.0


@dataclass
class EpisodeResult:
    log: SessionLog
    final_state: OrchestratorState
    bottle_roi_index: int
    gaze_samples: list[GazeSample]
    inserted_confusion: list[tuple[float, float]]
    confusion_events: list[ConfusionEvent]

    @property
    def completed(self) -> bool:
        return self.final_state.phase is Phase.DONE


@dataclass
class _Engine:
    """Mutable episode context shared by the pump loops."""

    scenario: Scenario
    config: OrchestratorConfig
    state: OrchestratorState
    clock: navigation.Clock
    log: SessionLog
    windows: list[GazeWindow] = field(default_factory=list)
    action_times: list[float] = field(default_factory=list)

    def apply(self, event: AssistEvent) -> list[Action]:
        self.state, actions = orchestrator_step(self.state, event, self.config)
        self.log.add_event(
            event.t,
            event=event.describe(),
            actions=[a.describe() for a in actions],
            state=self.state.describe(),
        )
        if actions:
            self.action_times.append(event.t)
            if any(a.kind is ActionKind.SPEAK for a in actions):
                self.windows.append(
                    GazeWindow("attention", event.t, event.t + _ATTENTION_SPAN_S)
                )
        return actions

    def advance_to(self, t: float) -> None:
        if t > self.clock.t:
            self.clock.advance(t - self.clock.t)


def _run_passive(engine: _Engine, user_rng) -> None:
    """Condition A: the user searches alone, asking for hints now and then."""
    profile = engine.scenario.profile
    cap = engine.scenario.session.time_cap_s
    engine.apply(AssistEvent.schedule_due(engine.clock.t))
    search_s = usersim.search_behavior(profile, user_rng, guided=False)
    search_end = min(search_s, cap)

    t_hint = profile.hint_interval_s
    while t_hint < search_end and not engine.state.terminal:
        engine.advance_to(t_hint)
        engine.apply(
            AssistEvent.record_pressed(engine.clock.t, "where is my medicine?")
        )
        window_start = t_hint + _ATTENTION_SPAN_S + 1.0
        window_end = min(t_hint + profile.hint_interval_s - 1.0, search_end)
        if window_end - window_start > 8.0:
            engine.windows.append(
                GazeWindow("confusion_candidate", window_start, window_end)
            )
        t_hint += profile.hint_interval_s

    if engine.state.terminal:
        return
    if search_s > cap:
        # The bottle was never found inside the session window.
        engine.advance_to(cap)
        engine.log.add_note(engine.clock.t, "time_cap_reached", cap_s=cap)
        return
    engine.advance_to(search_end)
    engine.apply(
        AssistEvent.user_action(engine.clock.t, usersim.UserActionKind.LOOKS_AT_BOTTLE)
    )
    engine.windows.append(
        GazeWindow("bottle", engine.clock.t, engine.clock.t + _BOTTLE_SPAN_S)
    )
    engine.clock.advance(2.0)
    engine.apply(
        AssistEvent.user_action(engine.clock.t, usersim.UserActionKind.OPENS_BOTTLE)
    )


def _make_nav_session(
    engine: _Engine, scene: world.Scene, robot: world.RobotState, seed: int, condition: str
) -> navigation.NavSession:
    sc = engine.scenario
    costmap = navigation.build_costmap(
        sc.nav_grid, sc.inflation_radius, sc.cost_decay, sc.robot_radius
    )

    def on_progress(kind: str, payload: dict) -> None:
        t = float(payload.pop("t", engine.clock.t))
        engine.log.add_note(t, kind, **payload)

    return navigation.NavSession(
        scene=scene,
        grid=sc.nav_grid,
        costmap=costmap,
        robot=robot,
        rois=sc.rois,
        intrinsics=sc.intrinsics,
        detector=sc.detector,
        params=navigation.DwaParams(),
        clock=engine.clock,
        detector_rng=seeding.stream(seed, condition, "detector"),
        depth_noise_rng=seeding.stream(seed, condition, "depth_noise"),
        pose_noise_rng=seeding.stream(seed, condition, "pose_noise"),
        dt=sc.session.dt,
        frame_time=sc.session.frame_time_s,
        depth_noise_sigma=sc.noise.depth_sigma,
        pose_noise_sigma=sc.noise.pose_sigma,
        on_progress=on_progress,
    )


_ROI_EVENT_KINDS = {
    "miss": EventKind.MISS,
    "found": EventKind.FOUND,
    "roi_unreachable": EventKind.ROI_UNREACHABLE,
    "exhausted": EventKind.EXHAUSTED,
}


def _pump_navigation(engine: _Engine, nav_session: navigation.NavSession) -> None:
    """Run the search sequencer, feeding its outcomes to the orchestrator."""
    for roi_event in navigation.roi_sequencer(nav_session):
        roi_id = roi_event.roi.id if roi_event.roi is not None else None
        event = AssistEvent(
            kind=_ROI_EVENT_KINDS[roi_event.kind],
            t=roi_event.t,
            roi=roi_id,
            target=roi_event.target,
        )
        engine.apply(event)
        if roi_event.kind == "found":
            # Gaze alignment plus the deictic gesture take real time.
            engine.clock.advance(engine.scenario.session.gesture_time_s)
            engine.windows.append(
                GazeWindow("bottle", roi_event.t, roi_event.t + _BOTTLE_SPAN_S)
            )
        if engine.state.phase not in (Phase.NAVIGATING, Phase.SCANNING):
            return


def _run_guided(
    engine: _Engine, seed: int, condition: str, user_rng, bottle_index: int
) -> None:
    """Condition B (or adaptive): reminder, search, then step-by-step guidance."""
    sc = engine.scenario
    profile = sc.profile
    timeout = sc.session.timeout_s
    cap = sc.session.time_cap_s

    scene = sc.build_scene(bottle_index)
    robot = sc.robot_state()
    nav_session = _make_nav_session(engine, scene, robot, seed, condition)

    engine.apply(AssistEvent.schedule_due(engine.clock.t))
    attempt = 0
    attempt_key: tuple = (engine.state.phase, engine.state.step, engine.state.assist_level)

    while not engine.state.terminal and engine.clock.t < cap:
        key = (engine.state.phase, engine.state.step, engine.state.assist_level)
        if key != attempt_key:
            attempt, attempt_key = 0, key

        phase = engine.state.phase
        if phase is Phase.REMINDING:
            reply = usersim.respond(
                profile,
                Prompt("reminder", int(engine.state.assist_level), attempt=attempt),
                user_rng,
            )
            attempt += 1
            if reply.silent:
                t0 = engine.clock.t
                engine.windows.append(
                    GazeWindow("confusion_candidate", t0 + 2.0, t0 + timeout - 1.0)
                )
                engine.clock.advance(timeout)
                engine.apply(AssistEvent.timeout(engine.clock.t, Phase.REMINDING))
            elif reply.pressed_start:
                engine.clock.advance(reply.latency_s)
                engine.apply(AssistEvent.start_navigation(engine.clock.t))
            else:
                engine.clock.advance(reply.latency_s)
                engine.apply(
                    AssistEvent.record_pressed(engine.clock.t, reply.transcript or "")
                )
        elif phase in (Phase.NAVIGATING, Phase.SCANNING):
            _pump_navigation(engine, nav_session)
        elif phase in (Phase.STEP_GUIDANCE, Phase.AWAITING_FINAL_CONFIRM):
            step = engine.state.step
            assert step is not None
            reply = usersim.respond(
                profile,
                Prompt("step", int(engine.state.assist_level), step=step, attempt=attempt),
                user_rng,
            )
            attempt += 1
            if reply.silent:
                t0 = engine.clock.t
                engine.windows.append(
                    GazeWindow("confusion_candidate", t0 + 2.0, t0 + timeout - 1.0)
                )
                engine.clock.advance(timeout)
                engine.apply(AssistEvent.timeout(engine.clock.t, phase))
            elif reply.action is None:
                engine.clock.advance(reply.latency_s)
                engine.apply(
                    AssistEvent.record_pressed(engine.clock.t, reply.transcript or "")
                )
            else:
                latency = reply.latency_s
                if step is GuidanceStep.LOCATE_BOTTLE:
                    latency = usersim.search_behavior(profile, user_rng, guided=True)
                engine.clock.advance(latency)
                engine.apply(AssistEvent.user_action(engine.clock.t, reply.action))
                if step is GuidanceStep.LOCATE_BOTTLE:
                    engine.windows.append(
                        GazeWindow(
                            "bottle", engine.clock.t, engine.clock.t + _BOTTLE_SPAN_S
                        )
                    )
                engine.clock.advance(_ACTION_TO_CONFIRM_S)
                engine.apply(
                    AssistEvent.record_pressed(engine.clock.t, reply.transcript or "")
                )
        else:
            logger.warning("episode stalled in phase %s; stopping", phase.value)
            break

    if not engine.state.terminal and engine.clock.t >= cap:
        engine.log.add_note(engine.clock.t, "time_cap_reached", cap_s=cap)


def run_episode(scenario: Scenario, condition: str, seed: int) -> EpisodeResult:
    """Simulate one full session under one condition with one seed."""
    if condition not in ("A", "B"):
        raise ValueError(f"condition must be 'A' or 'B', got {condition!r}")

    placement_rng = seeding.stream(seed, None, "placement")
    bottle_index = usersim.choose_bottle_roi(
        len(scenario.rois), scenario.profile, placement_rng
    )

    config = scenario.orchestrator_config(condition)
    log = SessionLog(
        meta={
            "format": LOG_FORMAT,
            "scenario": scenario.name,
            "scenario_hash": scenario.scenario_hash,
            "condition": condition,
            "seed": int(seed),
            "profile": scenario.profile.name,
            "bottle_roi": scenario.rois[bottle_index].id,
        }
    )
    engine = _Engine(
        scenario=scenario,
        config=config,
        state=initial_state(config),
        clock=navigation.Clock(0.0),
        log=log,
    )
    user_rng = seeding.stream(seed, condition, "user")

    if condition == "A":
        _run_passive(engine, user_rng)
    else:
        _run_guided(engine, seed, condition, user_rng, bottle_index)

    duration = engine.clock.t + 1.0
    gaze_rng = seeding.stream(seed, condition, "gaze")
    samples, inserted = usersim.gaze_stream(
        GazeTimeline(duration_s=duration, windows=tuple(engine.windows)),
        scenario.profile,
        gaze_rng,
    )
    confusion = usersim.detect_confusion(samples, engine.action_times)
    log.add_note(
        duration,
        "gaze_summary",
        n_samples=len(samples),
        inserted_runs=[[round(a, 6), round(b, 6)] for a, b in inserted],
        confusion_events=[[round(e.t_start, 6), round(e.t_end, 6)] for e in confusion],
    )
    return EpisodeResult(
        log=log,
        final_state=engine.state,
        bottle_roi_index=bottle_index,
        gaze_samples=samples,
        inserted_confusion=inserted,
        confusion_events=confusion,
    )
