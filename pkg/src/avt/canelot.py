"""CAN-activity power controller modeled as a pure state machine.

Wakes on a designated arbitration id, signals a graceful shutdown once that
id has been absent long enough, and cuts power after a fixed 60 s grace
period.  The machine is a pure function of (state, event, config); callers
own serialization of the event stream.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .errors import ClockRegression

GRACE_PERIOD_US = 60_000_000
DEFAULT_ABSENCE_TIMEOUT_US = 3_000_000


class StateKind(Enum):
    SLEEP = "sleep"
    POWERED = "powered"
    DRAINING = "draining"


@dataclass(frozen=True)
class PowerState:
    kind: StateKind = StateKind.SLEEP
    last_wake_ts: int | None = None  # POWERED: last time the wake id was seen
    signal_ts: int | None = None  # DRAINING: when SignalShutdown was emitted
    last_event_ts: int | None = None

    @classmethod
    def initial(cls) -> "PowerState":
        return cls()


@dataclass(frozen=True)
class FsmConfig:
    wake_arbitration_id: int
    absence_timeout_us: int = DEFAULT_ABSENCE_TIMEOUT_US
    grace_period_us: int = GRACE_PERIOD_US

    def __post_init__(self):
        if self.absence_timeout_us <= 0:
            raise ValueError("absence_timeout_us must be positive")
        if self.grace_period_us <= 0:
            raise ValueError("grace_period_us must be positive")


class ActionKind(Enum):
    CONNECT_POWER = "connect_power"
    SIGNAL_SHUTDOWN = "signal_shutdown"
    DISCONNECT_POWER = "disconnect_power"


@dataclass(frozen=True)
class FsmAction:
    kind: ActionKind
    ts: int  # effective event time of the action


@dataclass(frozen=True)
class FrameSeen:
    arbitration_id: int
    ts: int


@dataclass(frozen=True)
class Tick:
    ts: int


FsmEvent = FrameSeen | Tick


def fsm_step(
    state: PowerState, event: FsmEvent, config: FsmConfig
) -> tuple[PowerState, list[FsmAction]]:
    """Advance the power machine by one event.

    Raises ClockRegression when the event timestamp is earlier than the
    last one seen.
    """
    ts = event.ts
    if state.last_event_ts is not None and ts < state.last_event_ts:
        raise ClockRegression(f"event ts {ts} < last seen {state.last_event_ts}")

    is_wake_frame = isinstance(event, FrameSeen) and event.arbitration_id == config.wake_arbitration_id

    if state.kind is StateKind.SLEEP:
        if is_wake_frame:
            return (
                PowerState(StateKind.POWERED, last_wake_ts=ts, last_event_ts=ts),
                [FsmAction(ActionKind.CONNECT_POWER, ts)],
            )
        return replace(state, last_event_ts=ts), []

    if state.kind is StateKind.POWERED:
        if is_wake_frame:
            return replace(state, last_wake_ts=ts, last_event_ts=ts), []
        if isinstance(event, Tick) and ts - state.last_wake_ts >= config.absence_timeout_us:
            return (
                PowerState(StateKind.DRAINING, signal_ts=ts, last_event_ts=ts),
                [FsmAction(ActionKind.SIGNAL_SHUTDOWN, ts)],
            )
        return replace(state, last_event_ts=ts), []

    # DRAINING
    if is_wake_frame:
        # re-arm: a restart inside the grace window keeps power connected
        return replace(
            PowerState(StateKind.POWERED, last_wake_ts=ts, last_event_ts=ts), last_event_ts=ts
        ), []
    if isinstance(event, Tick) and ts - state.signal_ts >= config.grace_period_us:
        # power is cut at exactly signal + grace regardless of tick spacing
        return (
            PowerState(StateKind.SLEEP, last_event_ts=ts),
            [FsmAction(ActionKind.DISCONNECT_POWER, state.signal_ts + config.grace_period_us)],
        )
    return replace(state, last_event_ts=ts), []


def run_events(
    events: list[FsmEvent], config: FsmConfig, state: PowerState | None = None
) -> tuple[PowerState, list[FsmAction]]:
    """Fold a whole event sequence through the machine."""
    state = state or PowerState.initial()
    actions: list[FsmAction] = []
    for event in events:
        state, emitted = fsm_step(state, event, config)
        actions.extend(emitted)
    return state, actions
