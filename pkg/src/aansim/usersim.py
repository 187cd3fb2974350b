"""Discrete-event model of the assisted user, plus synthetic gaze streams.

User profiles capture how often a simulated participant ignores reminders,
how far the bottle drifts from its usual spot, and how much they struggle
with individual guidance steps.  Responses are drawn from dedicated RNG
streams so episodes replay bit-for-bit.  Gaze is emitted as a fixed-rate
sample stream over areas of interest; sustained off-task runs that contain
no robot action are flagged as confusion events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .orchestrator import EXPECTED_ACTION, GuidanceStep, UserActionKind

GAZE_SAMPLE_RATE_HZ = 180.0
DEFAULT_CONFUSION_THRESHOLD_S = 3.0


class Aoi(Enum):
    """Area of interest a gaze sample lands on."""

    BOTTLE = "bottle"
    ROBOT = "robot"
    ELSEWHERE = "elsewhere"


@dataclass(frozen=True)
class GazeSample:
    t: float
    aoi: Aoi


@dataclass(frozen=True)
class ConfusionEvent:
    """A maximal off-task gaze run long enough to signal the user is lost."""

    t_start: float
    t_end: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


class UnorderedStream(ValueError):
    """Gaze sample timestamps must be strictly increasing."""


@dataclass(frozen=True)
class UserProfile:
    """Behavioral parameters of a simulated participant."""

    name: str
    p_forget: float = 0.1  # chance of not answering a reminder
    p_misplace: float = 0.1  # bottle drift: placement odds and search slowdown
    p_struggle: float = 0.1  # chance of failing a guidance step attempt
    latency_mean_s: float = 4.0
    latency_sd_s: float = 1.5
    base_search_s: float = 42.0
    search_sd_s: float = 8.0
    hint_interval_s: float = 30.0

    def __post_init__(self) -> None:
        for attr in ("p_forget", "p_misplace", "p_struggle"):
            p = getattr(self, attr)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{attr} must be a probability, got {p}")
        if self.latency_mean_s <= 0 or self.base_search_s <= 0:
            raise ValueError("latencies and search times must be positive")


PROFILE_PRESETS: dict[str, UserProfile] = {
    "healthy": UserProfile("healthy", p_forget=0.05, p_misplace=0.10, p_struggle=0.05),
    "forgets": UserProfile("forgets", p_forget=0.60, p_misplace=0.20, p_struggle=0.10),
    "misplaces": UserProfile(
        "misplaces", p_forget=0.15, p_misplace=0.60, p_struggle=0.15
    ),
    "needs_step_by_step": UserProfile(
        "needs_step_by_step", p_forget=0.40, p_misplace=0.30, p_struggle=0.50
    ),
}


@dataclass(frozen=True)
class Prompt:
    """What the robot just asked of the user."""

    kind: str  # "reminder" or "step"
    level: int = 1
    step: GuidanceStep | None = None
    attempt: int = 0  # how many times this ask has already been made


@dataclass(frozen=True)
class UserReply:
    """A (possibly silent) user reaction to a prompt.

    ``latency_s`` is None for silence; callers translate silence into an
    orchestrator timeout.
    """

    latency_s: float | None = None
    transcript: str | None = None
    action: UserActionKind | None = None
    pressed_start: bool = False

    @property
    def silent(self) -> bool:
        return self.latency_s is None


_REMINDER_OK = ("okay", "yes, coming", "all right", "okay, I'm ready")
_STEP_OK: dict[GuidanceStep, tuple[str, ...]] = {
    GuidanceStep.LOCATE_BOTTLE: ("yes, I see it", "I can see it, yes", "found it, yes"),
    GuidanceStep.OPEN_BOTTLE: ("okay, opened it", "it's open, done", "done"),
    GuidanceStep.TAKE_PILLS: ("done, took them", "I took the pills, yes", "okay, done"),
    GuidanceStep.DRINK_WATER: ("done", "okay, drank it", "yes, done"),
    GuidanceStep.CONFIRM_INTAKE: ("yes, I took my medicine", "yes, all done", "yes"),
}
_STEP_DENY = ("not yet", "no, not yet", "no")


def _latency(profile: UserProfile, rng: np.random.Generator) -> float:
    return max(0.5, profile.latency_mean_s + profile.latency_sd_s * rng.standard_normal())


def _pick(options: tuple[str, ...], rng: np.random.Generator) -> str:
    return options[int(rng.integers(0, len(options)))]


def respond(profile: UserProfile, prompt: Prompt, rng: np.random.Generator) -> UserReply:
    """Draw the user's reaction to a robot prompt.

    Re-asks get easier to land: the odds of silence or struggling decay with
    each attempt, which mirrors how persistent prompting eventually gets
    through and keeps simulated sessions from stalling forever.
    """
    if prompt.kind == "reminder":
        p_silent = profile.p_forget * (0.5 ** prompt.attempt)
        if rng.random() < p_silent:
            return UserReply()
        latency = _latency(profile, rng)
        if prompt.level >= 3:
            return UserReply(latency_s=latency, pressed_start=True)
        return UserReply(latency_s=latency, transcript=_pick(_REMINDER_OK, rng))
    if prompt.kind == "step":
        if prompt.step is None:
            raise ValueError("step prompts need a step")
        p_fail = profile.p_struggle * (0.6 ** prompt.attempt)
        if rng.random() < p_fail:
            if rng.random() < 0.5:
                return UserReply(
                    latency_s=_latency(profile, rng),
                    transcript=_pick(_STEP_DENY, rng),
                )
            return UserReply()
        return UserReply(
            latency_s=_latency(profile, rng),
            transcript=_pick(_STEP_OK[prompt.step], rng),
            action=EXPECTED_ACTION[prompt.step],
        )
    raise ValueError(f"unknown prompt kind {prompt.kind!r}")


def search_behavior(
    profile: UserProfile, rng: np.random.Generator, guided: bool = False
) -> float:
    """Seconds the user needs to find the bottle.

    Guided search (the robot is pointing at the bottle) is a quick glance;
    unaided search scales with how far the bottle tends to drift from its
    usual spot.
    """
    if guided:
        return max(1.0, 4.0 + 1.0 * rng.standard_normal())
    slowdown = 1.0 + 2.0 * profile.p_misplace
    return max(5.0, profile.base_search_s * slowdown + profile.search_sd_s * rng.standard_normal())


def choose_bottle_roi(n_rois: int, profile: UserProfile, rng: np.random.Generator) -> int:
    """Index of the region the bottle actually sits in (0 = usual spot)."""
    if n_rois < 1:
        raise ValueError("need at least one region of interest")
    if n_rois == 1 or rng.random() >= profile.p_misplace:
        return 0
    return int(rng.integers(1, n_rois))


# ---------------------------------------------------------------------------
# Gaze streams


@dataclass(frozen=True)
class GazeWindow:
    """A span of the episode that biases where the user looks.

    kind:
      * "attention": user is engaging with the robot (reminders, prompts)
      * "bottle": user is looking toward or handling the bottle
      * "confusion_candidate": struggle or timeout span where a sustained
        off-task run may be injected
    """

    kind: str
    t_start: float
    t_end: float


@dataclass(frozen=True)
class GazeTimeline:
    duration_s: float
    windows: tuple[GazeWindow, ...] = ()


_BASELINE_WEIGHTS = {Aoi.ELSEWHERE: 0.55, Aoi.BOTTLE: 0.25, Aoi.ROBOT: 0.20}
_ATTENTION_WEIGHTS = {Aoi.ROBOT: 0.70, Aoi.BOTTLE: 0.10, Aoi.ELSEWHERE: 0.20}
_BOTTLE_WEIGHTS = {Aoi.BOTTLE: 0.70, Aoi.ROBOT: 0.10, Aoi.ELSEWHERE: 0.20}
_MIN_BLOCK_S = 0.4
_MAX_BLOCK_S = 1.8  # keeps natural off-task runs well under the threshold


def _weights_at(t: float, timeline: GazeTimeline) -> dict[Aoi, float]:
    for window in timeline.windows:
        if window.t_start <= t < window.t_end:
            if window.kind == "attention":
                return _ATTENTION_WEIGHTS
            if window.kind == "bottle":
                return _BOTTLE_WEIGHTS
    return _BASELINE_WEIGHTS


def _draw_aoi(
    weights: dict[Aoi, float], forbid: Aoi | None, rng: np.random.Generator
) -> Aoi:
    items = [(a, w) for a, w in weights.items() if a is not forbid]
    total = sum(w for _, w in items)
    r = rng.random() * total
    acc = 0.0
    for aoi, w in items:
        acc += w
        if r <= acc:
            return aoi
    return items[-1][0]


def gaze_stream(
    timeline: GazeTimeline,
    profile: UserProfile,
    rng: np.random.Generator,
    sample_rate_hz: float = GAZE_SAMPLE_RATE_HZ,
    confusion_threshold_s: float = DEFAULT_CONFUSION_THRESHOLD_S,
) -> tuple[list[GazeSample], list[tuple[float, float]]]:
    """Synthesize a fixed-rate gaze stream for one episode.

    Samples are placed at t = k / rate for k = 0 .. ceil(duration * rate) - 1,
    so every full second holds exactly ``rate`` samples.  Fixation blocks
    alternate between areas of interest with durations short enough that
    organic off-task runs never cross the confusion threshold; confusion is
    injected only inside candidate windows (with probability equal to the
    profile's struggle rate) as a contiguous off-task run slightly longer
    than the threshold.  Returns the samples and the injected run spans.
    """
    if timeline.duration_s <= 0:
        return [], []
    n = int(math.ceil(timeline.duration_s * sample_rate_hz))
    times = np.arange(n, dtype=np.float64) / sample_rate_hz

    # Fixation blocks: draw AOI per block, never repeating ELSEWHERE so
    # natural runs stay below one block length.
    aois: list[Aoi] = []
    prev: Aoi | None = None
    t_block = 0.0
    while len(aois) < n:
        forbid = Aoi.ELSEWHERE if prev is Aoi.ELSEWHERE else None
        aoi = _draw_aoi(_weights_at(t_block, timeline), forbid, rng)
        dur = rng.uniform(_MIN_BLOCK_S, _MAX_BLOCK_S)
        count = max(1, int(round(dur * sample_rate_hz)))
        aois.extend([aoi] * count)
        prev = aoi
        t_block += count / sample_rate_hz
    aois = aois[:n]

    # Inject sustained off-task runs inside candidate windows.
    inserted: list[tuple[float, float]] = []
    for window in timeline.windows:
        if window.kind != "confusion_candidate":
            continue
        if rng.random() >= profile.p_struggle:
            continue
        run_s = confusion_threshold_s + 1.0 + rng.uniform(0.0, 1.0)
        start_t = window.t_start + rng.uniform(
            0.0, max(0.0, (window.t_end - window.t_start) - run_s)
        )
        k0 = int(math.ceil(start_t * sample_rate_hz))
        k1 = min(n - 1, k0 + int(round(run_s * sample_rate_hz)) - 1)
        if k1 - k0 < 1:
            continue
        for k in range(k0, k1 + 1):
            aois[k] = Aoi.ELSEWHERE
        inserted.append((float(times[k0]), float(times[k1])))

    samples = [GazeSample(float(t), a) for t, a in zip(times, aois)]
    return samples, inserted


def detect_confusion(
    samples: list[GazeSample],
    action_times: list[float] | tuple[float, ...] = (),
    threshold_s: float = DEFAULT_CONFUSION_THRESHOLD_S,
) -> list[ConfusionEvent]:
    """Find maximal off-task gaze runs spanning at least the threshold.

    A run is confusion only if no robot action timestamp falls inside its
    closed time span; an action mid-run means the user was plausibly
    reacting to the robot rather than lost.  Raises UnorderedStream when
    sample timestamps are not strictly increasing.
    """
    if threshold_s <= 0:
        raise ValueError("threshold must be positive")
    for a, b in zip(samples, samples[1:]):
        if b.t <= a.t:
            raise UnorderedStream(
                f"gaze timestamps must be strictly increasing; saw {a.t} then {b.t}"
            )
    events: list[ConfusionEvent] = []
    i = 0
    n = len(samples)
    while i < n:
        if samples[i].aoi is not Aoi.ELSEWHERE:
            i += 1
            continue
        j = i
        while j + 1 < n and samples[j + 1].aoi is Aoi.ELSEWHERE:
            j += 1
        t0, t1 = samples[i].t, samples[j].t
        if t1 - t0 >= threshold_s and not any(t0 <= a <= t1 for a in action_times):
            events.append(ConfusionEvent(t0, t1))
        i = j + 1
    return events
