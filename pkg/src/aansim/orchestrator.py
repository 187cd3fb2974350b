"""Event-driven guidance orchestrator with graduated assist levels.

The orchestrator is a pure transition function: ``step(state, event,
config)`` returns the next state plus the actions (speech, gestures, motion
directives, caregiver notification) the robot should perform.  Level 1 is a
verbal reminder, level 2 adds gestural cues, level 3 adds navigation to the
medication site and deictic pointing at the found bottle.  Escalation is
monotone, one level at a time, driven by consecutive failures (timeouts or
refusals to comply); guidance steps advance in a fixed order and the session
ends Done only after the final intake confirmation.
"""

from __future__ import annotations

import concurrent.futures
import logging
import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Callable

import numpy as np

from .geometry import RigidTransform, ZeroDirection, pointing_angles

logger = logging.getLogger(__name__)


class AssistLevel(IntEnum):
    L1 = 1  # verbal reminder only
    L2 = 2  # verbal + gestural cues
    L3 = 3  # full multimodal: navigation, pointing, step-by-step guidance


class GuidanceStep(Enum):
    LOCATE_BOTTLE = "locate_bottle"
    OPEN_BOTTLE = "open_bottle"
    TAKE_PILLS = "take_pills"
    DRINK_WATER = "drink_water"
    CONFIRM_INTAKE = "confirm_intake"


STEP_ORDER = (
    GuidanceStep.LOCATE_BOTTLE,
    GuidanceStep.OPEN_BOTTLE,
    GuidanceStep.TAKE_PILLS,
    GuidanceStep.DRINK_WATER,
    GuidanceStep.CONFIRM_INTAKE,
)


class Phase(Enum):
    IDLE = "idle"
    REMINDING = "reminding"
    NAVIGATING = "navigating"
    SCANNING = "scanning"
    POINTING = "pointing"  # transient: lives inside the Found transition
    STEP_GUIDANCE = "step_guidance"
    AWAITING_FINAL_CONFIRM = "awaiting_final_confirm"
    DONE = "done"
    ABORTED = "aborted"

TERMINAL_PHASES = (Phase.DONE, Phase.ABORTED)
PROMPTING_PHASES = (Phase.REMINDING, Phase.STEP_GUIDANCE, Phase.AWAITING_FINAL_CONFIRM)


class IntentKind(Enum):
    CONFIRM = "confirm"
    DENY = "deny"
    REPEAT_REQUEST = "repeat_request"
    HELP_REQUEST = "help_request"
    REFUSAL = "refusal"
    OFF_TOPIC = "off_topic"
    UNKNOWN = "unknown"


class UserActionKind(Enum):
    LOOKS_AT_BOTTLE = "looks_at_bottle"
    OPENS_BOTTLE = "opens_bottle"
    TAKES_PILLS = "takes_pills"
    DRINKS_WATER = "drinks_water"
    CONFIRMS_INTAKE = "confirms_intake"
    WANDERS = "wanders"


EXPECTED_ACTION = {
    GuidanceStep.LOCATE_BOTTLE: UserActionKind.LOOKS_AT_BOTTLE,
    GuidanceStep.OPEN_BOTTLE: UserActionKind.OPENS_BOTTLE,
    GuidanceStep.TAKE_PILLS: UserActionKind.TAKES_PILLS,
    GuidanceStep.DRINK_WATER: UserActionKind.DRINKS_WATER,
    GuidanceStep.CONFIRM_INTAKE: UserActionKind.CONFIRMS_INTAKE,
}


class EventKind(Enum):
    SCHEDULE_DUE = "schedule_due"
    START_NAVIGATION_PRESSED = "start_navigation_pressed"
    RECORD_PRESSED = "record_pressed"
    INTENT = "intent"
    TIMEOUT = "timeout"
    FOUND = "found"
    MISS = "miss"
    EXHAUSTED = "exhausted"
    ROI_UNREACHABLE = "roi_unreachable"
    USER_ACTION = "user_action"
    GAZE_CONFUSION = "gaze_confusion"


@dataclass(frozen=True)
class AssistEvent:
    """Timestamped input to the orchestrator."""

    kind: EventKind
    t: float
    transcript: str | None = None
    intent: IntentKind | None = None
    roi: str | None = None
    target: object | None = None  # navigation.FoundTarget on FOUND events
    action: UserActionKind | None = None
    timeout_phase: Phase | None = None

    @classmethod
    def schedule_due(cls, t: float) -> "AssistEvent":
        return cls(EventKind.SCHEDULE_DUE, t)

    @classmethod
    def start_navigation(cls, t: float) -> "AssistEvent":
        return cls(EventKind.START_NAVIGATION_PRESSED, t)

    @classmethod
    def record_pressed(cls, t: float, transcript: str) -> "AssistEvent":
        return cls(EventKind.RECORD_PRESSED, t, transcript=transcript)

    @classmethod
    def intent_of(cls, t: float, intent: IntentKind) -> "AssistEvent":
        return cls(EventKind.INTENT, t, intent=intent)

    @classmethod
    def timeout(cls, t: float, phase: Phase) -> "AssistEvent":
        return cls(EventKind.TIMEOUT, t, timeout_phase=phase)

    @classmethod
    def found(cls, t: float, roi: str, target: object) -> "AssistEvent":
        return cls(EventKind.FOUND, t, roi=roi, target=target)

    @classmethod
    def miss(cls, t: float, roi: str) -> "AssistEvent":
        return cls(EventKind.MISS, t, roi=roi)

    @classmethod
    def exhausted(cls, t: float) -> "AssistEvent":
        return cls(EventKind.EXHAUSTED, t)

    @classmethod
    def roi_unreachable(cls, t: float, roi: str) -> "AssistEvent":
        return cls(EventKind.ROI_UNREACHABLE, t, roi=roi)

    @classmethod
    def user_action(cls, t: float, action: UserActionKind) -> "AssistEvent":
        return cls(EventKind.USER_ACTION, t, action=action)

    @classmethod
    def gaze_confusion(cls, t: float) -> "AssistEvent":
        return cls(EventKind.GAZE_CONFUSION, t)

    def describe(self) -> dict:
        out: dict = {"kind": self.kind.value}
        if self.transcript is not None:
            out["transcript"] = self.transcript
        if self.intent is not None:
            out["intent"] = self.intent.value
        if self.roi is not None:
            out["roi"] = self.roi
        if self.action is not None:
            out["action"] = self.action.value
        if self.timeout_phase is not None:
            out["timeout_phase"] = self.timeout_phase.value
        return out


class ActionKind(Enum):
    SPEAK = "speak"
    GESTURE = "gesture"
    ALIGN_GAZE = "align_gaze"
    NAVIGATE_TO = "navigate_to"
    REPOSITION = "reposition"
    ROTATE_BASE = "rotate_base"
    NOTIFY_CAREGIVER = "notify_caregiver"


# Action kinds that move the base or the arm; Condition A must emit none.
MOTION_ACTION_KINDS = (
    ActionKind.GESTURE,
    ActionKind.ALIGN_GAZE,
    ActionKind.NAVIGATE_TO,
    ActionKind.REPOSITION,
    ActionKind.ROTATE_BASE,
)


@dataclass(frozen=True)
class Action:
    """A robot output directive with a JSON-friendly payload."""

    kind: ActionKind
    payload: dict

    @classmethod
    def speak(cls, text: str) -> "Action":
        return cls(ActionKind.SPEAK, {"text": text})

    @classmethod
    def gesture_beckon(cls) -> "Action":
        return cls(ActionKind.GESTURE, {"gesture": "beckon"})

    @classmethod
    def gesture_point(cls, yaw: float, pitch: float, origin, direction) -> "Action":
        return cls(
            ActionKind.GESTURE,
            {
                "gesture": "point",
                "yaw": float(yaw),
                "pitch": float(pitch),
                "origin": [float(c) for c in origin],
                "direction": [float(c) for c in direction],
            },
        )

    @classmethod
    def align_gaze(cls, target) -> "Action":
        return cls(ActionKind.ALIGN_GAZE, {"target": [float(c) for c in target]})

    @classmethod
    def navigate_to(cls, roi: str) -> "Action":
        return cls(ActionKind.NAVIGATE_TO, {"roi": roi})

    @classmethod
    def reposition(cls, distance: float) -> "Action":
        return cls(ActionKind.REPOSITION, {"back_up": float(distance)})

    @classmethod
    def rotate_base(cls, angle: float) -> "Action":
        return cls(ActionKind.ROTATE_BASE, {"angle": float(angle)})

    @classmethod
    def notify_caregiver(cls, reason: str) -> "Action":
        return cls(ActionKind.NOTIFY_CAREGIVER, {"reason": reason})

    def describe(self) -> dict:
        return {"kind": self.kind.value, **self.payload}


class InvalidEvent(Exception):
    """An event arrived in a phase where it has no meaning (strict mode)."""


REMINDER_TEXT = {
    AssistLevel.L1: "It's time to take your medicine.",
    AssistLevel.L2: "It's time to take your medicine. Please come, I can help you.",
    AssistLevel.L3: "Time to take your medicine, follow me!",
}

_STEP_PROMPTS: dict[GuidanceStep, tuple[str, str]] = {
    GuidanceStep.LOCATE_BOTTLE: (
        "Your medicine bottle is right there. Can you see it?",
        "Look where I am pointing. The medicine bottle is just ahead of you.",
    ),
    GuidanceStep.OPEN_BOTTLE: (
        "Open the bottle.",
        "Please twist the cap to open your medicine bottle.",
    ),
    GuidanceStep.TAKE_PILLS: (
        "Take the prescribed number of pills.",
        "Take out exactly the number of pills your doctor prescribed.",
    ),
    GuidanceStep.DRINK_WATER: (
        "Drink water.",
        "Please drink some water to help swallow the pills.",
    ),
    GuidanceStep.CONFIRM_INTAKE: (
        "Please confirm: did you take your medicine?",
        "Tell me once you have taken your medicine.",
    ),
}

_LOCATE_PROMPT_UNGUIDED = "Please go to where you keep your medicine and find the bottle."


def prompt_for(step: GuidanceStep, level: AssistLevel, rephrase: bool = False) -> str:
    """Prompt text for a step; the locate step differs when no pointing happened."""
    if step is GuidanceStep.LOCATE_BOTTLE and level < AssistLevel.L3:
        return _LOCATE_PROMPT_UNGUIDED
    first, second = _STEP_PROMPTS[step]
    return second if rephrase else first


@dataclass(frozen=True)
class OrchestratorConfig:
    """Tunables for the guidance policy."""

    condition: str = "B"  # "A": passive hint-giver; "B"/adaptive: guided
    start_level: AssistLevel = AssistLevel.L1
    escalation_threshold: int = 2
    max_repeats: int = 2
    timeout_s: float = 20.0
    min_standoff: float = 0.6
    gaze_confusion_enabled: bool = False
    strict: bool = False
    arm_origin: tuple[float, float, float] = (0.0, 0.0, 0.8)
    roi_ids: tuple[str, ...] = ()
    roi_labels: tuple[str, ...] = ()

    @property
    def passive(self) -> bool:
        return self.condition == "A"


@dataclass(frozen=True)
class OrchestratorState:
    """Immutable machine state; ``step`` returns updated copies."""

    phase: Phase
    assist_level: AssistLevel
    step: GuidanceStep | None = None
    repeat_count: int = 0
    failure_count: int = 0
    refusal_count: int = 0
    roi_index: int = 0
    hint_index: int = 0
    clock: float = 0.0

    @property
    def terminal(self) -> bool:
        return self.phase in TERMINAL_PHASES

    def describe(self) -> dict:
        out = {
            "phase": self.phase.value,
            "assist_level": int(self.assist_level),
        }
        if self.step is not None:
            out["step"] = self.step.value
        return out


def initial_state(config: OrchestratorConfig) -> OrchestratorState:
    return OrchestratorState(phase=Phase.IDLE, assist_level=config.start_level)


# ---------------------------------------------------------------------------
# Intent interpretation


_INTENT_RULES: tuple[tuple[IntentKind, tuple[str, ...]], ...] = (
    (
        IntentKind.REFUSAL,
        (
            "refuse", "won't", "will not", "leave me alone", "go away",
            "stop it", "no more", "not taking", "never",
        ),
    ),
    (
        IntentKind.REPEAT_REQUEST,
        (
            "repeat", "again", "say that", "pardon", "what did you say",
            "didn't hear", "once more", "come again",
        ),
    ),
    (
        IntentKind.HELP_REQUEST,
        (
            "help", "where", "how", "can't", "cannot", "unable", "stuck",
            "lost", "confused", "show me", "which",
        ),
    ),
    (
        IntentKind.DENY,
        ("no", "not yet", "haven't", "didn't", "nope", "not done"),
    ),
    (
        IntentKind.CONFIRM,
        (
            "yes", "yeah", "yep", "ok", "okay", "done", "took", "taken",
            "finished", "got it", "opened", "swallowed", "drank", "see it",
            "i see", "found", "sure", "alright", "ready", "coming",
        ),
    ),
    (
        IntentKind.OFF_TOPIC,
        ("weather", "hello", "hi there", "what time", "lunch", "dinner", "song", "tv"),
    ),
)


def interpret(transcript: str) -> IntentKind:
    """Rule-based intent stub: keyword classes checked in precedence order
    Refusal > RepeatRequest > HelpRequest > Deny > Confirm > OffTopic, with
    empty or unmatched transcripts mapping to Unknown."""
    # Punctuation must not glue to keywords ("done!" is still a confirm);
    # apostrophes stay because several keywords carry contractions.
    text = " ".join(re.sub(r"[^a-z0-9']+", " ", transcript.lower()).split())
    if not text:
        return IntentKind.UNKNOWN
    padded = f" {text} "
    for intent, keywords in _INTENT_RULES:
        for kw in keywords:
            if kw[0].isalnum() and kw[-1].isalnum():
                if f" {kw} " in padded or padded.startswith(f" {kw} ") or padded.endswith(f" {kw} "):
                    return intent
            elif kw in padded:
                return intent
    return IntentKind.UNKNOWN


IntentBackend = Callable[[str], IntentKind]


def with_timeout(backend: IntentBackend, timeout_s: float = 2.0) -> IntentBackend:
    """Wrap an intent backend so slow or failing calls degrade to Unknown."""
    executor = concurrent.futures.ThreadPoolExecutor(max_workers=1)

    def guarded(transcript: str) -> IntentKind:
        future = executor.submit(backend, transcript)
        try:
            return future.result(timeout=timeout_s)
        except Exception:  # noqa: BLE001 - any backend failure degrades the same way
            logger.warning("intent backend failed or timed out; substituting Unknown")
            return IntentKind.UNKNOWN

    return guarded


# ---------------------------------------------------------------------------
# Deictic gesture assembly


def gesture_actions(target_base, config: OrchestratorConfig) -> list[Action]:
    """Pointing action sequence for a base-frame target.

    Prepends a Reposition when the target is closer than the minimum
    standoff, and a base rotation when the target is behind the robot so the
    executed pointing yaw satisfies |yaw| <= 90 deg.
    """
    target = np.asarray(target_base, dtype=np.float64).reshape(3)
    origin = np.asarray(config.arm_origin, dtype=np.float64)
    actions: list[Action] = []
    try:
        cmd = pointing_angles(target, origin)
    except ZeroDirection:
        logger.warning("pointing target coincides with the arm origin; gaze only")
        return [Action.align_gaze(target)]

    standoff = math.hypot(target[0], target[1])
    if standoff < config.min_standoff:
        actions.append(Action.reposition(config.min_standoff - standoff))
    if abs(cmd.yaw) > math.pi / 2.0:
        actions.append(Action.rotate_base(cmd.yaw))
        rotated = RigidTransform.from_yaw(-cmd.yaw).apply(target)
        cmd = pointing_angles(rotated, origin)
    actions.append(Action.align_gaze(target))
    actions.append(Action.gesture_point(cmd.yaw, cmd.pitch, origin, cmd.direction))
    return actions


# ---------------------------------------------------------------------------
# Transition function


def _invalid(
    state: OrchestratorState, event: AssistEvent, config: OrchestratorConfig
) -> tuple[OrchestratorState, list[Action]]:
    if config.strict:
        raise InvalidEvent(f"{event.kind.value} not valid in phase {state.phase.value}")
    logger.debug("ignoring %s in phase %s", event.kind.value, state.phase.value)
    return state, []


def _reminder_actions(level: AssistLevel) -> list[Action]:
    actions = [Action.speak(REMINDER_TEXT[level])]
    if level >= AssistLevel.L2:
        actions.append(Action.gesture_beckon())
    return actions


def _start_navigation(
    state: OrchestratorState, config: OrchestratorConfig, announce: bool = True
) -> tuple[OrchestratorState, list[Action]]:
    actions = []
    if announce:
        actions.append(Action.speak("Looking for your medicine bottle."))
    if config.roi_ids:
        actions.append(Action.navigate_to(config.roi_ids[0]))
    nxt = replace(
        state, phase=Phase.NAVIGATING, roi_index=0, repeat_count=0, failure_count=0
    )
    return nxt, actions


def _enter_step(
    state: OrchestratorState,
    step: GuidanceStep,
    config: OrchestratorConfig,
    rephrase: bool = False,
) -> tuple[OrchestratorState, list[Action]]:
    phase = (
        Phase.AWAITING_FINAL_CONFIRM
        if step is GuidanceStep.CONFIRM_INTAKE
        else Phase.STEP_GUIDANCE
    )
    nxt = replace(
        state, phase=phase, step=step, repeat_count=0, failure_count=0
    )
    return nxt, [Action.speak(prompt_for(step, state.assist_level, rephrase))]


def _advance_step(
    state: OrchestratorState, config: OrchestratorConfig
) -> tuple[OrchestratorState, list[Action]]:
    assert state.step is not None
    pos = STEP_ORDER.index(state.step)
    if state.step is GuidanceStep.CONFIRM_INTAKE:
        done = replace(state, phase=Phase.DONE)
        return done, [Action.speak("Well done! You have taken your medicine.")]
    return _enter_step(state, STEP_ORDER[pos + 1], config)


def _abort(
    state: OrchestratorState, reason: str, text: str
) -> tuple[OrchestratorState, list[Action]]:
    nxt = replace(state, phase=Phase.ABORTED)
    return nxt, [Action.speak(text), Action.notify_caregiver(reason)]


def _escalate_or_abort(
    state: OrchestratorState, config: OrchestratorConfig
) -> tuple[OrchestratorState, list[Action]]:
    """One-level escalation after repeated failure; abort at the top level."""
    if state.assist_level >= AssistLevel.L3:
        return _abort(
            state,
            "assistance exhausted at the highest level",
            "I will ask your caregiver to help you.",
        )
    level = AssistLevel(int(state.assist_level) + 1)
    esc = replace(state, assist_level=level, failure_count=0, repeat_count=0)
    if state.phase is Phase.REMINDING:
        if level is AssistLevel.L3:
            nxt, actions = _start_navigation(esc, config, announce=False)
            return nxt, [Action.speak(REMINDER_TEXT[level])] + actions
        return esc, _reminder_actions(level)
    # Step guidance: re-deliver the current prompt with the richer level.
    assert esc.step is not None
    return esc, [Action.speak(prompt_for(esc.step, level, rephrase=True))]


def _register_failure(
    state: OrchestratorState, config: OrchestratorConfig
) -> tuple[OrchestratorState, list[Action]]:
    bumped = replace(state, failure_count=state.failure_count + 1)
    if bumped.failure_count >= config.escalation_threshold:
        return _escalate_or_abort(bumped, config)
    if bumped.phase is Phase.REMINDING:
        return bumped, [Action.speak(REMINDER_TEXT[bumped.assist_level])]
    assert bumped.step is not None
    return bumped, [
        Action.speak(prompt_for(bumped.step, bumped.assist_level, rephrase=True))
    ]


def _register_refusal(
    state: OrchestratorState, config: OrchestratorConfig
) -> tuple[OrchestratorState, list[Action]]:
    bumped = replace(state, refusal_count=state.refusal_count + 1)
    if bumped.refusal_count >= 2:
        return _abort(
            bumped,
            "user refused assistance twice",
            "All right, I will leave you be and let your caregiver know.",
        )
    return bumped, [
        Action.speak("I understand. Your medicine is important; I will stay close if you change your mind.")
    ]


def _rephrase_or_fail(
    state: OrchestratorState, config: OrchestratorConfig, text: str
) -> tuple[OrchestratorState, list[Action]]:
    """Spend the repeat budget on a rephrase; failures follow once spent."""
    if state.repeat_count < config.max_repeats:
        return replace(state, repeat_count=state.repeat_count + 1), [Action.speak(text)]
    return _register_failure(state, config)


def _handle_intent(
    state: OrchestratorState, intent: IntentKind, config: OrchestratorConfig
) -> tuple[OrchestratorState, list[Action]]:
    """Intent handling shared by the Reminding and step-guidance phases."""
    if intent is IntentKind.REFUSAL:
        return _register_refusal(state, config)
    if state.phase is Phase.REMINDING:
        if intent is IntentKind.CONFIRM:
            if state.assist_level is AssistLevel.L3:
                return _start_navigation(state, config)
            return _enter_step(state, GuidanceStep.LOCATE_BOTTLE, config)
        if intent is IntentKind.DENY:
            return _register_failure(state, config)
        if intent is IntentKind.REPEAT_REQUEST:
            return _rephrase_or_fail(state, config, REMINDER_TEXT[state.assist_level])
        # HelpRequest, OffTopic, Unknown all earn a clarification.
        return _rephrase_or_fail(
            state, config, "I am here to help you take your medicine. " + REMINDER_TEXT[state.assist_level]
        )
    # Step guidance phases.
    assert state.step is not None
    if intent is IntentKind.CONFIRM:
        return _advance_step(state, config)
    if intent is IntentKind.DENY:
        return _register_failure(state, config)
    if intent in (IntentKind.REPEAT_REQUEST, IntentKind.HELP_REQUEST):
        return _rephrase_or_fail(
            state, config, prompt_for(state.step, state.assist_level, rephrase=True)
        )
    # OffTopic / Unknown.
    return _rephrase_or_fail(
        state,
        config,
        "Let's focus on your medicine. " + prompt_for(state.step, state.assist_level, rephrase=True),
    )


def _passive_step(
    state: OrchestratorState, event: AssistEvent, config: OrchestratorConfig
) -> tuple[OrchestratorState, list[Action]]:
    """Condition A: answer location questions, otherwise stay out of the way."""
    if event.kind in (EventKind.RECORD_PRESSED, EventKind.INTENT):
        intent = event.intent if event.intent is not None else interpret(event.transcript or "")
        if intent is IntentKind.REFUSAL:
            return _register_refusal(state, config)
        if intent is IntentKind.REPEAT_REQUEST and state.hint_index > 0:
            label = _hint_label(config, state.hint_index - 1)
            return state, [Action.speak(f"I said: it might be {label}.")]
        label = _hint_label(config, state.hint_index)
        nxt = replace(state, hint_index=state.hint_index + 1)
        return nxt, [Action.speak(f"You could check {label}.")]
    if event.kind is EventKind.USER_ACTION:
        if event.action is UserActionKind.OPENS_BOTTLE:
            done = replace(state, phase=Phase.DONE)
            return done, [Action.speak("You found your medicine, great.")]
        return state, []
    return _invalid(state, event, config)


def _hint_label(config: OrchestratorConfig, index: int) -> str:
    if not config.roi_labels:
        return "one of your usual spots"
    return config.roi_labels[index % len(config.roi_labels)]


def step(
    state: OrchestratorState, event: AssistEvent, config: OrchestratorConfig
) -> tuple[OrchestratorState, list[Action]]:
    """Apply one event; returns the successor state and the robot actions.

    Unknown or phase-inconsistent events raise InvalidEvent in strict mode
    and are logged-and-ignored otherwise.  Event timestamps must not run
    backward.
    """
    if event.t < state.clock - 1e-9:
        raise ValueError(
            f"event at t={event.t} precedes orchestrator clock {state.clock}"
        )
    state = replace(state, clock=event.t)

    if state.terminal:
        return _invalid(state, event, config)

    if config.passive:
        return _passive_step(state, event, config)

    kind = event.kind

    if kind is EventKind.GAZE_CONFUSION:
        if not config.gaze_confusion_enabled:
            logger.debug("gaze confusion event ignored (disabled)")
            return state, []
        if state.phase in (Phase.STEP_GUIDANCE, Phase.AWAITING_FINAL_CONFIRM):
            assert state.step is not None
            return _rephrase_or_fail(
                state,
                config,
                "You seem unsure. " + prompt_for(state.step, state.assist_level, rephrase=True),
            )
        if state.phase is Phase.REMINDING:
            return _rephrase_or_fail(state, config, REMINDER_TEXT[state.assist_level])
        return state, []

    if state.phase is Phase.IDLE:
        if kind is EventKind.SCHEDULE_DUE:
            nxt = replace(state, phase=Phase.REMINDING, repeat_count=0, failure_count=0)
            return nxt, _reminder_actions(state.assist_level)
        return _invalid(state, event, config)

    if state.phase is Phase.REMINDING:
        if kind is EventKind.START_NAVIGATION_PRESSED:
            if state.assist_level is AssistLevel.L3:
                return _start_navigation(state, config)
            return _invalid(state, event, config)
        if kind is EventKind.TIMEOUT:
            if event.timeout_phase not in (None, Phase.REMINDING):
                return _invalid(state, event, config)
            return _register_failure(state, config)
        if kind in (EventKind.RECORD_PRESSED, EventKind.INTENT):
            intent = event.intent if event.intent is not None else interpret(event.transcript or "")
            return _handle_intent(state, intent, config)
        if kind is EventKind.USER_ACTION:
            return state, []
        return _invalid(state, event, config)

    if state.phase in (Phase.NAVIGATING, Phase.SCANNING):
        if kind is EventKind.MISS or kind is EventKind.ROI_UNREACHABLE:
            next_index = state.roi_index + 1
            nxt = replace(state, phase=Phase.SCANNING, roi_index=next_index)
            if next_index < len(config.roi_ids):
                return nxt, [Action.navigate_to(config.roi_ids[next_index])]
            return nxt, []
        if kind is EventKind.FOUND:
            actions = [Action.speak("I found your medicine bottle!")]
            if event.target is not None:
                actions.extend(gesture_actions(event.target.target_base, config))
            nxt, prompt = _enter_step(state, GuidanceStep.LOCATE_BOTTLE, config)
            return nxt, actions + prompt
        if kind is EventKind.EXHAUSTED:
            return _abort(
                state,
                "medicine bottle not found at any known location",
                "I could not find your medicine. I will ask your caregiver.",
            )
        if kind in (EventKind.RECORD_PRESSED, EventKind.INTENT):
            intent = event.intent if event.intent is not None else interpret(event.transcript or "")
            if intent is IntentKind.REFUSAL:
                return _register_refusal(state, config)
            if state.repeat_count < config.max_repeats:
                return (
                    replace(state, repeat_count=state.repeat_count + 1),
                    [Action.speak("Please follow me while I look for your medicine.")],
                )
            return state, []  # stop chattering; navigation events drive progress
        if kind is EventKind.USER_ACTION:
            return state, []
        return _invalid(state, event, config)

    if state.phase in (Phase.STEP_GUIDANCE, Phase.AWAITING_FINAL_CONFIRM):
        assert state.step is not None
        if kind is EventKind.TIMEOUT:
            if event.timeout_phase not in (None, state.phase):
                return _invalid(state, event, config)
            if state.repeat_count < config.max_repeats:
                return (
                    replace(state, repeat_count=state.repeat_count + 1),
                    [Action.speak(prompt_for(state.step, state.assist_level, rephrase=True))],
                )
            return _escalate_or_abort(state, config)
        if kind in (EventKind.RECORD_PRESSED, EventKind.INTENT):
            intent = event.intent if event.intent is not None else interpret(event.transcript or "")
            return _handle_intent(state, intent, config)
        if kind is EventKind.USER_ACTION:
            if event.action is EXPECTED_ACTION[state.step]:
                return state, []  # physical progress noted; await verbal confirm
            return _register_failure(state, config)
        return _invalid(state, event, config)

    return _invalid(state, event, config)
