"""Deterministic per-second simulation loop and experiment orchestration.

One run binds a store, a sampled event trace and a policy, then walks the
period tick by tick.  Within a tick the order is fixed: slot-boundary
bookkeeping (entry-level forcing, slot planning), the wake decision, the
energy draw (a wake-up that cannot be funded is skipped, never partial),
then harvesting -- so a decision sees the energy banked up to the end of the
previous tick.  Periods repeat until the period cap or a stop rule.

Pattern-change schedules swap the pattern between periods (shift, morph or
replace) and resample the trace from a fresh substream, which is how the
adaptation experiments drive the learner back through re-profiling.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from .energy import (
    WAKE_COST,
    DRAW_SLACK,
    AbstractStore,
    CapacitorArray,
    HarvestSource,
    capacitor_preset,
)
from .events import (
    EventPattern,
    morph_pattern,
    pattern_id,
    sample_trace,
    shift_pattern,
)
from .learner import LearnerConfig
from .policies import (
    BURST,
    BasePolicy,
    CtidConfig,
    CtidPolicy,
    CtidProPolicy,
    GtPolicy,
    SmartOnPolicy,
)
from .rng import Stream

POLICY_NAMES = ("smarton", "ctid", "ctidpro", "gt")


@dataclass(frozen=True)
class PatternChange:
    """Swap the world's pattern starting at `period`."""

    period: int
    kind: str  # shift | morph | replace
    arg: object = None
    entry_level: int | None = None


@dataclass
class SimConfig:
    pattern: EventPattern
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    policy: str = "smarton"
    ctid: CtidConfig = field(default_factory=CtidConfig)
    store_kind: str = "abstract"  # abstract | array
    capacity: float = 120.0
    charging_ratio: float = 9.0
    capacitor_preset_name: str = "image"
    v_max: float = 3.3
    v_activate: float = 2.8
    source_kind: str = "constant"
    source_level: float = 1.0
    source_path: str | None = None
    n_periods: int = 40
    seed: int = 0
    record_level: str = "summary"  # summary | per-tick
    entry_level: int | None = None
    measure_from: int = 0
    repeat_first_period: bool = False
    schedule: tuple[PatternChange, ...] = ()
    stop_rule: str | None = None  # e.g. "phase_ge:2", "phase3_stable:5"
    initial_stored: float = 0.0
    # cut the source during peak windows: the controlled-entry experiments
    # then give each peak exactly its entry-level energy budget
    gate_source_in_peaks: bool = False
    # start CTID at a seeded point of its charge cycle instead of empty;
    # avoids burst/period resonance artifacts under perfectly constant sources
    ctid_phase_jitter: bool = False

    def __post_init__(self):
        if self.policy not in POLICY_NAMES:
            raise ValueError(f"unknown policy {self.policy!r}; valid: {POLICY_NAMES}")
        if self.record_level not in ("summary", "per-tick"):
            raise ValueError(f"unknown record level {self.record_level!r}")
        if self.pattern.period_ticks % self.learner.state_duration != 0:
            raise ValueError(
                f"learner state duration {self.learner.state_duration} must divide "
                f"the period {self.pattern.period_ticks}"
            )
        if self.entry_level is not None and not (
            1 <= self.entry_level <= self.learner.k_levels
        ):
            raise ValueError(
                f"entry level {self.entry_level} outside 1..{self.learner.k_levels}"
            )


@dataclass
class PeriodLog:
    period: int
    phase_start: int
    awake_ticks: int
    event_ticks: int
    catches: int
    drawn: float
    harvested: float
    wasted_saturation: float
    skipped_wakeups: int
    stored_start: float
    stored_end: float
    forced_delta: float = 0.0  # energy injected/removed by entry forcing
    ticks: dict | None = None  # per-tick arrays when record_level == per-tick

    @property
    def spent(self) -> float:
        """Nominal energy priced at one wake cost per awake tick (GT included)."""
        return self.awake_ticks * WAKE_COST

    @property
    def spent_on_event(self) -> float:
        return self.catches * WAKE_COST

    @property
    def misses(self) -> int:
        return self.event_ticks - self.catches


@dataclass
class Metrics:
    total_catches: int
    energy_efficiency: float
    awake_ticks: int
    event_ticks: int
    drawn: float
    harvested: float

    def __post_init__(self):
        assert self.total_catches <= min(self.awake_ticks, self.event_ticks) or (
            self.awake_ticks == 0 and self.total_catches == 0
        )
        assert 0.0 <= self.energy_efficiency <= 1.0


@dataclass
class ExperimentResult:
    config: SimConfig
    periods: list[PeriodLog]
    episodes: list[dict]
    phase_timeline: list[int]
    phase1_stays: list[dict]
    tables: dict
    policy: BasePolicy

    @property
    def n_periods_run(self) -> int:
        return len(self.periods)


def make_store(config: SimConfig):
    if config.store_kind == "abstract":
        return AbstractStore(capacity=config.capacity, charging_ratio=config.charging_ratio)
    if config.store_kind == "array":
        return capacitor_preset(
            config.capacitor_preset_name, v_max=config.v_max, v_activate=config.v_activate
        )
    raise ValueError(f"unknown store kind {config.store_kind!r}")


def make_source(config: SimConfig, pattern: EventPattern | None = None) -> HarvestSource:
    pattern = pattern or config.pattern
    if config.source_kind == "constant":
        # gating implements the controlled-entry protocol, which only the
        # entry-controllable policies run under; the free-running baselines
        # keep the continuous source
        if config.gate_source_in_peaks and config.policy in ("smarton", "ctidpro"):
            d = pattern.state_duration
            gaps = [(p.start_slot * d, p.end_slot * d) for p in pattern.peaks]
            return HarvestSource.constant_gated(
                config.source_level, gaps, pattern.period_ticks
            )
        return HarvestSource.constant(config.source_level)
    if config.source_kind == "diurnal":
        return HarvestSource.diurnal(config.source_level)
    if config.source_kind == "trace":
        return HarvestSource.from_trace_file(config.source_path)
    raise ValueError(f"unknown source kind {config.source_kind!r}")


def make_policy(config: SimConfig) -> BasePolicy:
    slot_len = config.learner.state_duration
    n_slots = config.pattern.period_ticks // slot_len
    if config.policy == "gt":
        return GtPolicy(slot_len)
    if config.policy == "ctid":
        return CtidPolicy(config.ctid)
    if config.policy == "ctidpro":
        return CtidProPolicy(config.learner, n_slots, config.seed)
    return SmartOnPolicy(
        config.learner, n_slots, config.seed, entry_level_hint=config.entry_level
    )


def set_stored(store, value: float) -> None:
    """Force the store to hold `value` energy (entry-level control)."""
    if isinstance(store, AbstractStore):
        store.stored = min(value, store.capacity)
    elif isinstance(store, CapacitorArray):
        c = store.active_capacitance
        store.voltage = (2.0 * min(value, store.capacity) / c) ** 0.5 if c > 0 else 0.0
    else:
        raise TypeError(f"cannot force energy on {type(store).__name__}")


def entry_level_energy(level: int, capacity: float, k_levels: int) -> float:
    """Midpoint energy of a quantized level."""
    return (level - 0.5) * capacity / k_levels


def run_period(
    policy: BasePolicy,
    store,
    source: HarvestSource,
    events: list,
    period_index: int,
    period_ticks: int,
    slot_len: int,
    entry_ticks: frozenset,
    entry_value: float | None,
    record_ticks: bool,
) -> PeriodLog:
    """Simulate one period; `events` is the period's per-tick 0/1 list.

    The abstract-store/constant-source combination takes an inlined fast
    path whose arithmetic mirrors the store methods operation for operation;
    everything else (capacitor arrays, varying sources, per-tick recording)
    runs the general loop.  Both paths produce identical logs.
    """
    if (
        not record_ticks
        and isinstance(store, AbstractStore)
        and source.kind in ("constant", "constant-gated")
    ):
        return _run_period_fast(
            policy, store, source, events, period_index, period_ticks,
            slot_len, entry_ticks, entry_value,
        )
    return _run_period_general(
        policy, store, source, events, period_index, period_ticks,
        slot_len, entry_ticks, entry_value, record_ticks,
    )


def _run_period_general(
    policy: BasePolicy,
    store,
    source: HarvestSource,
    events: list,
    period_index: int,
    period_ticks: int,
    slot_len: int,
    entry_ticks: frozenset,
    entry_value: float | None,
    record_ticks: bool,
) -> PeriodLog:
    phase_start = policy.current_phase
    stored_start = store.stored
    policy.on_period_start(period_index)

    awake_total = 0
    catches_total = 0
    drawn_total = 0.0
    skipped = 0
    waste_before = store.wasted_saturation
    harvested_total = 0.0

    rec = None
    if record_ticks:
        rec = {
            "awake": np.zeros(period_ticks, dtype=bool),
            "event": np.array(events, dtype=bool),
            "drawn": np.zeros(period_ticks),
            "harvested": np.zeros(period_ticks),
            "stored": np.zeros(period_ticks),
            "phase": np.zeros(period_ticks, dtype=np.int8),
            "slot": np.zeros(period_ticks, dtype=np.int16),
            "step": np.zeros(period_ticks, dtype=np.int8),
        }

    draws = policy.draws_energy
    tick_driven = policy.tick_driven
    global_base = period_index * period_ticks
    n_slots = period_ticks // slot_len
    forced_delta = 0.0

    for slot in range(n_slots):
        base = slot * slot_len
        # entry-level control engages once the policy knows the peak exists
        # (phases 2/3); profiling runs on the energy it actually banked
        if (
            entry_value is not None
            and base in entry_ticks
            and policy.current_phase >= 2
        ):
            before_force = store.stored
            set_stored(store, entry_value)
            forced_delta += store.stored - before_force

        plan = None
        burst = False
        offsets = ()
        if not tick_driven:
            plan = policy.plan_slot(slot, store)
            if plan == BURST:
                burst = True
            else:
                offsets = set(plan)

        slot_awake = 0
        slot_catches = 0
        step = policy.current_step

        for i in range(slot_len):
            t = base + i
            awake = False
            harvest_ok = True
            if tick_driven:
                awake, harvest_ok = policy.tick(t, store.stored)
            elif burst:
                # CTID-style discharge region: no harvesting for the whole
                # slot, awake while the store can fund wake-ups
                awake = store.stored >= WAKE_COST - DRAW_SLACK
                harvest_ok = False
            else:
                awake = i in offsets

            drawn_here = 0.0
            if awake:
                if draws:
                    if store.can_draw(WAKE_COST):
                        store.draw(WAKE_COST)
                        drawn_here = WAKE_COST
                    else:
                        skipped += 1
                        awake = False
            if awake:
                slot_awake += 1
                if events[t]:
                    slot_catches += 1

            harvested_here = 0.0
            if harvest_ok:
                harvested_here = store.harvest_tick(source, global_base + t)
            harvested_total += harvested_here

            if rec is not None:
                rec["awake"][t] = awake
                rec["drawn"][t] = drawn_here
                rec["harvested"][t] = harvested_here
                rec["stored"][t] = store.stored
                rec["phase"][t] = policy.current_phase
                rec["slot"][t] = slot
                rec["step"][t] = step

            drawn_total += drawn_here
        awake_total += slot_awake
        catches_total += slot_catches
        policy.on_slot_end(slot, slot_awake, slot_catches, store)

    policy.on_period_end(period_index)

    return PeriodLog(
        period=period_index,
        phase_start=phase_start,
        awake_ticks=awake_total,
        event_ticks=int(sum(events)),
        catches=catches_total,
        drawn=drawn_total,
        harvested=harvested_total,
        wasted_saturation=store.wasted_saturation - waste_before,
        skipped_wakeups=skipped,
        stored_start=stored_start,
        stored_end=store.stored,
        forced_delta=forced_delta,
        ticks=rec,
    )


def _run_period_fast(
    policy: BasePolicy,
    store: AbstractStore,
    source: HarvestSource,
    events: list,
    period_index: int,
    period_ticks: int,
    slot_len: int,
    entry_ticks: frozenset,
    entry_value: float | None,
) -> PeriodLog:
    """Summary-mode loop with the store arithmetic inlined.

    Every float operation replicates AbstractStore.harvest_tick / draw in
    the same order, so results are bit-identical to the general path.
    """
    phase_start = policy.current_phase
    stored_start = store.stored
    policy.on_period_start(period_index)

    cap = store.capacity
    global_base = period_index * period_ticks
    ratio = store.charging_ratio
    if source.kind == "constant":
        level = source(0)
        inflows = [level * WAKE_COST / ratio] * period_ticks
    else:
        inflows = [
            source(global_base + t) * WAKE_COST / ratio for t in range(period_ticks)
        ]
    draw_floor = WAKE_COST - DRAW_SLACK
    s = store.stored
    waste = store.wasted_saturation
    waste_before = waste

    awake_total = 0
    catches_total = 0
    drawn_total = 0.0
    harvested_total = 0.0
    skipped = 0

    draws = policy.draws_energy
    is_ctid = isinstance(policy, CtidPolicy)
    n_slots = period_ticks // slot_len
    forced_delta = 0.0

    if is_ctid:
        ctid = policy
        e_on = ctid.cfg.e_on - DRAW_SLACK
        e_off = ctid.cfg.e_off + DRAW_SLACK
        interval = ctid.wake_interval
        discharging = ctid.discharging
        start = ctid.discharge_start

    for slot in range(n_slots):
        base = slot * slot_len
        if (
            entry_value is not None
            and base in entry_ticks
            and policy.current_phase >= 2
        ):
            forced = min(entry_value, cap)
            forced_delta += forced - s
            s = forced

        burst = False
        offsets = ()
        if not is_ctid:
            store.stored = s
            plan = policy.plan_slot(slot, store)
            if plan == BURST:
                burst = True
            else:
                offsets = plan

        slot_awake = 0
        slot_catches = 0

        if is_ctid:
            for i in range(slot_len):
                t = base + i
                if discharging and (s <= e_off or s < draw_floor):
                    discharging = False
                if not discharging and s >= e_on:
                    discharging = True
                    start = t
                if discharging:
                    if (t - start) % interval == 0:
                        if s >= draw_floor:
                            s = max(0.0, s - WAKE_COST)
                            drawn_total += WAKE_COST
                            slot_awake += 1
                            if events[t]:
                                slot_catches += 1
                        else:
                            skipped += 1
                else:
                    inc = inflows[t]
                    room = cap - s
                    if inc > room:
                        waste += inc - room
                        s = cap
                    else:
                        s += inc
                    harvested_total += inc
        elif burst:
            for i in range(slot_len):
                if s >= draw_floor:
                    s = max(0.0, s - WAKE_COST)
                    drawn_total += WAKE_COST
                    slot_awake += 1
                    if events[base + i]:
                        slot_catches += 1
        else:
            j = 0
            n_off = len(offsets)
            next_off = offsets[0] if n_off else -1
            for i in range(slot_len):
                if i == next_off:
                    j += 1
                    next_off = offsets[j] if j < n_off else -1
                    if draws:
                        if s >= draw_floor:
                            s = max(0.0, s - WAKE_COST)
                            drawn_total += WAKE_COST
                            slot_awake += 1
                            if events[base + i]:
                                slot_catches += 1
                        else:
                            skipped += 1
                    else:
                        slot_awake += 1
                        if events[base + i]:
                            slot_catches += 1
                inc = inflows[base + i]
                room = cap - s
                if inc > room:
                    waste += inc - room
                    s = cap
                else:
                    s += inc
                harvested_total += inc

        awake_total += slot_awake
        catches_total += slot_catches
        if not is_ctid:
            store.stored = s
            store.wasted_saturation = waste
            policy.on_slot_end(slot, slot_awake, slot_catches, store)
            s = store.stored
            waste = store.wasted_saturation

    store.stored = s
    store.wasted_saturation = waste
    if is_ctid:
        ctid.discharging = discharging
        ctid.discharge_start = start
    policy.on_period_end(period_index)

    return PeriodLog(
        period=period_index,
        phase_start=phase_start,
        awake_ticks=awake_total,
        event_ticks=int(sum(events)),
        catches=catches_total,
        drawn=drawn_total,
        harvested=harvested_total,
        wasted_saturation=waste - waste_before,
        skipped_wakeups=skipped,
        stored_start=stored_start,
        stored_end=store.stored,
        forced_delta=forced_delta,
        ticks=None,
    )


def apply_change(pattern: EventPattern, change: PatternChange) -> EventPattern:
    if change.kind == "shift":
        return shift_pattern(pattern, int(change.arg))
    if change.kind == "morph":
        index, shape = change.arg
        return morph_pattern(pattern, index, shape)
    if change.kind == "replace":
        return change.arg
    raise ValueError(f"unknown pattern change kind {change.kind!r}")


def _parse_stop_rule(rule: str | None):
    if rule is None:
        return None, None
    kind, _, arg = rule.partition(":")
    if kind not in ("phase_ge", "phase3_stable"):
        raise ValueError(f"unknown stop rule {rule!r}")
    return kind, int(arg) if arg else (2 if kind == "phase_ge" else 5)


def run_experiment(config: SimConfig) -> ExperimentResult:
    """Run a full multi-period experiment per the config."""
    store = make_store(config)
    source = make_source(config)
    policy = make_policy(config)
    slot_len = config.learner.state_duration

    if config.n_periods <= 0:
        return ExperimentResult(
            config=config, periods=[], episodes=[], phase_timeline=[],
            phase1_stays=[], tables={}, policy=policy,
        )

    if config.initial_stored > 0.0:
        set_stored(store, config.initial_stored)
    elif config.policy == "ctid" and config.ctid_phase_jitter:
        # start at a seeded point of the CTID charge/discharge cycle: warm the
        # real dynamics up for a fraction of one cycle so any phase --
        # including mid-discharge -- is reachable
        u = Stream(config.seed, "ctid-phase").next_double()
        cycle = int(
            config.ctid.e_on * config.charging_ratio / max(config.source_level, 1e-9)
            + config.ctid.e_on * policy.wake_interval
        )
        warmup = int(u * cycle)
        for t in range(warmup):
            # negative tick values keep wake intervals aligned to t=0
            awake, harvest_ok = policy.tick(t - warmup, store.stored)
            if awake and store.can_draw(WAKE_COST):
                store.draw(WAKE_COST)
            if harvest_ok:
                store.harvest_tick(source, 0)

    pattern = config.pattern
    entry_level = config.entry_level
    changes = sorted(config.schedule, key=lambda c: c.period)
    change_idx = 0
    segment = 0

    trace = sample_trace(
        pattern, config.seed, config.n_periods,
        repeat_first_period=config.repeat_first_period,
    )
    period_ticks = pattern.period_ticks

    stop_kind, stop_arg = _parse_stop_rule(config.stop_rule)
    phase3_streak = 0

    periods: list[PeriodLog] = []
    phase_timeline: list[int] = []

    base_pattern = pattern
    for p in range(config.n_periods):
        while change_idx < len(changes) and changes[change_idx].period == p:
            change = changes[change_idx]
            pattern = apply_change(pattern, change)
            source = make_source(config, pattern)
            if change.entry_level is not None:
                entry_level = change.entry_level
                if isinstance(policy, SmartOnPolicy):
                    policy.entry_level_hint = entry_level
            segment += 1
            # a returning pattern replays its emitter schedule: trace streams
            # are keyed by the pattern itself, so identical patterns yield
            # identical realizations within one run
            name = "trace" if pattern == base_pattern else f"trace:{pattern_id(pattern)}"
            trace = sample_trace(
                pattern,
                config.seed,
                config.n_periods - p,
                repeat_first_period=config.repeat_first_period,
                stream_name=name,
            )
            trace_base = p
            change_idx += 1
        if segment == 0:
            trace_base = 0

        # entry forcing only makes sense for policies with a notion of peak
        # entry; GT ignores energy and CTID's charge cycle must stay free-
        # running or forcing would synchronize its bursts with the peak
        if entry_level is not None and config.policy in ("smarton", "ctidpro"):
            entry_ticks = frozenset(
                peak.start_slot * pattern.state_duration for peak in pattern.peaks
            )
            for t in entry_ticks:
                if t % slot_len != 0:
                    raise ValueError(
                        f"entry-level forcing needs peak starts aligned to learner "
                        f"slots; tick {t} is not a multiple of {slot_len}"
                    )
            entry_value = entry_level_energy(
                entry_level, store.capacity, config.learner.k_levels
            )
        else:
            entry_ticks = frozenset()
            entry_value = None

        offset = (p - trace_base) * period_ticks
        events = trace.occurrences[offset : offset + period_ticks].tolist()

        log = run_period(
            policy,
            store,
            source,
            events,
            p,
            period_ticks,
            slot_len,
            entry_ticks,
            entry_value,
            config.record_level == "per-tick",
        )
        periods.append(log)
        phase_timeline.append(log.phase_start)

        if stop_kind == "phase_ge" and policy.current_phase >= stop_arg:
            break
        if stop_kind == "phase3_stable":
            phase3_streak = phase3_streak + 1 if policy.current_phase == 3 else 0
            if phase3_streak >= stop_arg:
                break

    episodes = getattr(policy, "episodes", [])
    stays = getattr(policy, "phase1_stays", [])
    tables = getattr(policy, "ctx", None)
    return ExperimentResult(
        config=config,
        periods=periods,
        episodes=list(episodes),
        phase_timeline=phase_timeline,
        phase1_stays=list(stays),
        tables=dict(tables.tables) if tables is not None else {},
        policy=policy,
    )


def compute_metrics(periods, from_period: int = 0) -> Metrics:
    """Aggregate total catches and energy efficiency over periods[from_period:]."""
    window = [p for p in periods if p.period >= from_period]
    catches = sum(p.catches for p in window)
    awake = sum(p.awake_ticks for p in window)
    events = sum(p.event_ticks for p in window)
    spent = sum(p.spent for p in window)
    on_event = sum(p.spent_on_event for p in window)
    efficiency = on_event / spent if spent > 0 else 0.0
    return Metrics(
        total_catches=catches,
        energy_efficiency=efficiency,
        awake_ticks=awake,
        event_ticks=events,
        drawn=sum(p.drawn for p in window),
        harvested=sum(p.harvested for p in window),
    )


def convergence_stats(result: ExperimentResult) -> dict:
    """Per-entry-level episodes-to-converge and Phase-1 pass counts."""
    per_level = {}
    for shape, table in result.tables.items():
        for level in sorted(table.episodes_to_converge):
            order = table.first_entered.index(level) + 1
            per_level[(shape, level)] = {
                "episodes_to_converge": table.episodes_to_converge[level],
                "learn_order": order,
            }
    return {
        "per_level": per_level,
        "phase1_stays": result.phase1_stays,
        "phase2_episodes": len(result.episodes),
    }


@dataclass
class PartitionStudyResult:
    order: tuple[int, ...]
    episodes_per_level: dict[int, int]
    first_converged_at: int
    all_converged_at: int
    total_episodes: int


def run_partition_study(
    base: SimConfig, order, max_periods: int = 20000
) -> PartitionStudyResult:
    """Force entry levels in the given order, each until its partition
    converges, and report global episode indices of the first and last
    convergence (the partitioned vs monolithic exploitation gates)."""
    config = dc_replace(base, n_periods=max_periods)
    store = make_store(config)
    source = make_source(config)
    policy = make_policy(config)
    if not isinstance(policy, SmartOnPolicy):
        raise ValueError("partition studies need the learning policy")
    policy.explore_forever = True
    slot_len = config.learner.state_duration
    pattern = config.pattern
    period_ticks = pattern.period_ticks

    trace = sample_trace(
        pattern, config.seed, 1, repeat_first_period=True
    )
    events = trace.occurrences[:period_ticks].tolist()
    entry_ticks = frozenset(
        peak.start_slot * pattern.state_duration for peak in pattern.peaks
    )
    if len(pattern.peaks) != 1:
        raise ValueError("partition studies use single-peak patterns")
    shape_expected = None

    order = [int(x) for x in order]
    target_idx = 0
    episode_count = 0
    first_at = None
    latch_at: dict[int, int] = {}

    for p in range(max_periods):
        level = order[target_idx]
        policy.entry_level_hint = level
        entry_value = entry_level_energy(level, store.capacity, config.learner.k_levels)
        before = len(policy.episodes)
        run_period(
            policy, store, source, events, p, period_ticks, slot_len,
            entry_ticks, entry_value, False,
        )
        episode_count += len(policy.episodes) - before
        if policy.ctx.phase < 2:
            continue
        if shape_expected is None and policy.ctx.known_peaks:
            shape_expected = policy.ctx.known_peaks[0].shape
        table = policy.ctx.tables.get(shape_expected)
        if table is None:
            continue
        if level in table.converged_levels and level not in latch_at:
            latch_at[level] = episode_count
            if first_at is None:
                first_at = episode_count
            target_idx += 1
            if target_idx >= len(order):
                break
    if target_idx < len(order):
        raise RuntimeError(
            f"partition study did not converge all levels in {max_periods} periods"
        )
    episodes_per_level = {
        level: policy.ctx.tables[shape_expected].episodes_to_converge[level]
        for level in order
    }
    return PartitionStudyResult(
        order=tuple(order),
        episodes_per_level=episodes_per_level,
        first_converged_at=first_at,
        all_converged_at=episode_count,
        total_episodes=episode_count,
    )
