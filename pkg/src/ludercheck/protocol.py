"""The black-box discrimination protocol for the Lüders rule.

Given an apparatus that claims to measure a base observable, the protocol
decides from outcome statistics alone whether the apparatus reduces states
by the Lüders rule on a chosen degenerate eigenspace.  It prepares a
subensemble that returned the target eigenvalue, then interleaves the
apparatus between two measurements of an auxiliary non-degenerate
observable ``sigma``: if any system's second ``sigma`` outcome differs
from its first, the reduction was not Lüders.  A second pass swaps in an
auxiliary ``sigma_prime`` whose eigenvectors overlap every ``sigma``
eigenvector of the eigenspace, which catches the remaining case where the
hidden blocks happen to be diagonal in the ``sigma`` basis.  Consistency
in both passes identifies the Lüders rule: exactly, in the exact channel
mode, and up to a quantified false-acceptance bound in sampled mode.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .apparatus import (
    MeasurementApparatus,
    MeasurementRecord,
    Stage,
    _labels_close,
)
from .linalg import DEFAULT_TOL, hermitian_eig
from .quantum import (
    DensityMatrix,
    PureState,
    Refinement,
    SpectralDecomposition,
    build_sigma,
    build_sigma_prime,
    measure_pure,
    spectral_decompose,
    _sigma_entries_in_group,
)


class Mode(Enum):
    EXACT = "exact"
    SAMPLED = "sampled"


class StageKind(Enum):
    SIGMA = "SIGMA"
    SIGMA_PRIME = "SIGMA_PRIME"


class Verdict(Enum):
    LUDERS = "LUDERS"
    NON_LUDERS = "NON_LUDERS"
    INDETERMINATE = "INDETERMINATE"


class RepeatabilityError(RuntimeError):
    """The apparatus failed to reproduce the selected eigenvalue; aborting."""


class EmptySelectionError(ValueError):
    """No system survived a selection step; retry with a larger ensemble."""


@dataclass(frozen=True)
class ProtocolConfig:
    """Run parameters for :func:`discriminate`.

    ``target_eigenvalue`` of ``None`` selects the first degenerate
    eigenvalue in descending order.  ``min_disturbance`` is the per-system
    mismatch probability assumed of any non-Lüders apparatus when quoting
    the sampled-mode false-acceptance bound ``(1 - p)**trials``.
    """

    mode: Mode = Mode.EXACT
    ensemble_size: int = 1000
    target_eigenvalue: float | None = None
    min_disturbance: float = 0.5
    confidence: float = 1e-3
    tol: float = DEFAULT_TOL
    grouping_threshold: float | None = None
    seed: int | None = None

    def validate(self):
        if self.mode is Mode.SAMPLED and self.ensemble_size < 1:
            raise ValueError("sampled mode needs ensemble_size >= 1")
        if not 0.0 < self.min_disturbance < 1.0:
            raise ValueError("min_disturbance must lie strictly between 0 and 1")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie strictly between 0 and 1")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class StageResult:
    """Evidence gathered by one auxiliary-observable pass.

    Sampled mode counts per-system mismatches between the two auxiliary
    measurements.  Exact mode records, per reachable first outcome, the
    full second-measurement distribution (``branch_support``); outcomes of
    the eigenspace that the ensemble state cannot reach are listed in
    ``unprobed_labels`` rather than silently skipped.
    """

    stage: StageKind
    consistent: bool
    observed_first_labels: tuple[float, ...]
    mismatch_count: int
    trials: int
    branch_support: tuple[tuple[float, tuple[tuple[float, float], ...]], ...]
    unprobed_labels: tuple[float, ...] = ()


@dataclass(frozen=True)
class Classification:
    """The protocol's verdict with its supporting evidence."""

    verdict: Verdict
    detected_at: StageKind | None
    evidence: tuple[StageResult, ...]
    false_acceptance_bound: float | None
    transcript: tuple[MeasurementRecord, ...]
    target_eigenvalue: float | None = None
    reference_label: float | None = None


@dataclass(frozen=True)
class Ensemble:
    """Systems selected for one protocol pass.

    Sampled mode carries individually tracked pure systems; exact mode
    carries the one branch density matrix the selection produces.
    """

    provenance: str
    systems: tuple[tuple[int, PureState], ...] | None = None
    state: DensityMatrix | None = None

    @property
    def size(self) -> int:
        return len(self.systems) if self.systems is not None else 0


def required_ensemble_size(min_disturbance: float, confidence: float) -> int:
    """Smallest N with (1 - min_disturbance)**N <= confidence."""
    if not 0.0 < min_disturbance < 1.0:
        raise ValueError("min_disturbance must lie strictly between 0 and 1")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie strictly between 0 and 1")
    miss = 1.0 - min_disturbance
    n = max(1, math.ceil(math.log(confidence) / math.log(miss) - 1e-12))
    while miss**n > confidence:
        n += 1
    while n > 1 and miss ** (n - 1) <= confidence:
        n -= 1
    return n


def classify_refinement_oracle(refinement: Refinement, k: int) -> Verdict:
    """Ground truth from the hidden structure: Lüders iff eigenspace k is one block."""
    if not 0 <= k < refinement.base.group_count:
        raise ValueError(f"eigenspace index {k} out of range")
    return Verdict.LUDERS if refinement.block_count(k) == 1 else Verdict.NON_LUDERS


def _as_pure_mixture(
    initial: PureState | DensityMatrix, tol: float
) -> list[tuple[float, PureState]]:
    """Resolve an initial state into a pure-state mixture for sampling."""
    if isinstance(initial, PureState):
        return [(1.0, initial)]
    # Mixture weights are the eigenvalues of the density matrix.
    w, v = hermitian_eig(initial.matrix, tol)
    mixture = []
    for i, weight in enumerate(w):
        if weight > tol:
            mixture.append((float(weight), PureState(v[:, i])))
    if not mixture:
        raise ValueError("initial density matrix has no positive-weight component")
    total = sum(p for p, _ in mixture)
    return [(p / total, s) for p, s in mixture]


def prepare_ensemble(
    initial: PureState | DensityMatrix,
    app: MeasurementApparatus,
    target_label: float,
    config: ProtocolConfig,
    rng: np.random.Generator,
) -> Ensemble:
    """Measure the initial state and keep what returned the target eigenvalue.

    Sampled mode draws ``ensemble_size`` systems from the initial state,
    measures each with the apparatus, and keeps those whose outcome matched;
    system ids from the unselected ensemble are preserved.  Exact mode takes
    the matching branch of the exact channel.
    """
    if config.mode is Mode.SAMPLED:
        mixture = _as_pure_mixture(initial, config.tol)
        kept = []
        for sid in range(config.ensemble_size):
            state = mixture[0][1]
            if len(mixture) > 1:
                u = rng.random()
                acc = 0.0
                for p, s in mixture:
                    acc += p
                    if u < acc:
                        state = s
                        break
                else:
                    state = mixture[-1][1]
            label, post = app.measure_sampled(state, rng)
            if _labels_close(label, target_label):
                kept.append((sid, post))
        if not kept:
            raise EmptySelectionError(
                f"no system returned eigenvalue {target_label}; the initial "
                "state may be orthogonal to its eigenspace, or the ensemble "
                "is too small -- retry with a larger ensemble_size"
            )
        return Ensemble(
            provenance=f"selected label {target_label} from "
            f"{config.ensemble_size} systems",
            systems=tuple(kept),
        )
    rho = initial.density() if isinstance(initial, PureState) else initial
    for label, prob, branch in app.channel_exact(rho):
        if _labels_close(label, target_label):
            return Ensemble(
                provenance=f"exact branch for label {target_label} "
                f"(weight {prob})",
                state=branch,
            )
    raise EmptySelectionError(
        f"the initial state is orthogonal to the eigenspace of {target_label}"
    )


_STAGE_RECORDS = {
    StageKind.SIGMA: (Stage.SIGMA_1, Stage.APPARATUS_A, Stage.SIGMA_2),
    StageKind.SIGMA_PRIME: (
        Stage.SIGMA_PRIME_1,
        Stage.APPARATUS_A_2,
        Stage.SIGMA_PRIME_2,
    ),
}


def run_stage(
    ensemble: Ensemble,
    aux: SpectralDecomposition,
    app: MeasurementApparatus,
    base: SpectralDecomposition,
    target_group: int,
    kind: StageKind,
    config: ProtocolConfig,
    rng: np.random.Generator,
    transcript: list[MeasurementRecord] | None = None,
    clock: "itertools.count | None" = None,
) -> tuple[StageResult, dict[float, Ensemble]]:
    """One pass: auxiliary measurement, apparatus, auxiliary measurement again.

    Returns the stage evidence and, keyed by first auxiliary outcome, the
    subensembles available for a follow-up pass.  Raises
    :class:`RepeatabilityError` if the apparatus ever fails to reproduce the
    target eigenvalue on a selected system.
    """
    target_label = base.eigenvalues[target_group]
    if config.mode is Mode.SAMPLED:
        return _run_stage_sampled(
            ensemble, aux, app, target_label, kind, config, rng, transcript, clock
        )
    return _run_stage_exact(ensemble, aux, app, base, target_group, kind, config)


def _run_stage_sampled(
    ensemble, aux, app, target_label, kind, config, rng, transcript, clock
):
    first_stage, app_stage, second_stage = _STAGE_RECORDS[kind]
    if ensemble.systems is None:
        raise ValueError("sampled mode needs an ensemble of tracked systems")
    if clock is None:
        clock = itertools.count()
    mismatches = 0
    observed: list[float] = []
    sub: dict[float, list[tuple[int, PureState]]] = {}

    def record(sid, stage, label):
        if transcript is not None:
            transcript.append(
                MeasurementRecord(sid, stage, float(label), next(clock))
            )
        else:
            next(clock)

    for sid, state in ensemble.systems:
        first, state = measure_pure(aux, state, rng)
        record(sid, first_stage, first)
        coarse, state = app.measure_sampled(state, rng)
        record(sid, app_stage, coarse)
        if not _labels_close(coarse, target_label):
            raise RepeatabilityError(
                f"apparatus returned {coarse} on a system selected for "
                f"{target_label}; it does not measure the base observable"
            )
        second, state = measure_pure(aux, state, rng)
        record(sid, second_stage, second)
        if first not in observed:
            observed.append(first)
        if second != first:
            mismatches += 1
        sub.setdefault(first, []).append((sid, state))
    result = StageResult(
        stage=kind,
        consistent=mismatches == 0,
        observed_first_labels=tuple(observed),
        mismatch_count=mismatches,
        trials=len(ensemble.systems),
        branch_support=(),
    )
    subensembles = {
        label: Ensemble(
            provenance=f"{ensemble.provenance} -> {kind.value} outcome {label}",
            systems=tuple(members),
        )
        for label, members in sub.items()
    }
    return result, subensembles


def _run_stage_exact(ensemble, aux, app, base, target_group, kind, config):
    if ensemble.state is None:
        raise ValueError("exact mode needs an ensemble density matrix")
    tol = config.tol
    rho = ensemble.state.matrix
    target_label = base.eigenvalues[target_group]
    entries = _sigma_entries_in_group(base, aux, target_group)
    probed = []
    unprobed = []
    for label, vec in entries:
        weight = float((vec.conj() @ rho @ vec).real)
        if weight > tol:
            probed.append((label, vec, weight))
        else:
            unprobed.append(label)
    if not probed:
        raise EmptySelectionError(
            "the ensemble state is orthogonal to every auxiliary outcome of "
            "the target eigenspace"
        )
    mismatches = 0
    supports = []
    subensembles = {}
    for label, vec, _ in probed:
        branches = app.channel_exact(PureState(vec).density())
        branch = None
        for coarse, prob, state in branches:
            if _labels_close(coarse, target_label):
                branch = (prob, state)
                break
        if branch is None or branch[0] < 1.0 - 1e-6:
            raise RepeatabilityError(
                f"apparatus failed to reproduce eigenvalue {target_label} on "
                "an eigenspace state; it does not measure the base observable"
            )
        second = branch[1].matrix
        dist = []
        point_mass = False
        for lab2, vec2 in entries:
            q = float((vec2.conj() @ second @ vec2).real)
            if q > tol:
                dist.append((lab2, q))
            if lab2 == label and q >= 1.0 - tol:
                point_mass = True
        if not point_mass:
            mismatches += 1
        supports.append((label, tuple(dist)))
        subensembles[label] = Ensemble(
            provenance=f"{ensemble.provenance} -> {kind.value} outcome {label}",
            state=PureState(vec).density(),
        )
    result = StageResult(
        stage=kind,
        consistent=mismatches == 0,
        observed_first_labels=tuple(label for label, _, _ in probed),
        mismatch_count=mismatches,
        trials=len(probed),
        branch_support=tuple(supports),
        unprobed_labels=tuple(unprobed),
    )
    return result, subensembles


def _resolve_target(decomp: SpectralDecomposition, config: ProtocolConfig) -> int | None:
    """The eigenspace to interrogate, or None when the verdict is indeterminate."""
    if config.target_eigenvalue is not None:
        k = decomp.group_index(config.target_eigenvalue)
        return k if decomp.multiplicities[k] >= 2 else None
    for k, n in enumerate(decomp.multiplicities):
        if n >= 2:
            return k
    return None


def _exact_reference(ensemble: Ensemble, probed_labels, base, aux, target_group):
    """Highest-probability first outcome; ties go to the earliest label."""
    rho = ensemble.state.matrix
    best = None
    for label, vec in _sigma_entries_in_group(base, aux, target_group):
        if label not in probed_labels:
            continue
        weight = float((vec.conj() @ rho @ vec).real)
        if best is None or weight > best[1] + 1e-12:
            best = (label, weight)
    return best[0]


def discriminate(
    initial: PureState | DensityMatrix,
    app: MeasurementApparatus,
    observable: np.ndarray,
    config: ProtocolConfig | None = None,
) -> Classification:
    """Decide whether the apparatus reduces states by the Lüders rule.

    The verdict concerns the target eigenspace: NON_LUDERS as soon as one
    pass shows a disturbed auxiliary outcome, LUDERS when both passes are
    consistent, INDETERMINATE when the target eigenvalue is non-degenerate
    (the reduction rules then coincide and nothing can distinguish them).
    """
    if config is None:
        config = ProtocolConfig()
    config.validate()
    decomp = spectral_decompose(
        observable, config.grouping_threshold, tol=config.tol
    )
    target_group = _resolve_target(decomp, config)
    if target_group is None:
        return Classification(
            verdict=Verdict.INDETERMINATE,
            detected_at=None,
            evidence=(),
            false_acceptance_bound=None,
            transcript=(),
        )
    target_label = decomp.eigenvalues[target_group]
    rng = np.random.default_rng(config.seed)
    transcript: list[MeasurementRecord] = []
    clock = itertools.count()

    ensemble = prepare_ensemble(initial, app, target_label, config, rng)
    _, sigma = build_sigma(decomp)
    first, subensembles = run_stage(
        ensemble, sigma, app, decomp, target_group, StageKind.SIGMA,
        config, rng, transcript, clock,
    )
    if not first.consistent:
        return Classification(
            verdict=Verdict.NON_LUDERS,
            detected_at=StageKind.SIGMA,
            evidence=(first,),
            false_acceptance_bound=None,
            transcript=tuple(transcript),
            target_eigenvalue=target_label,
        )

    if config.mode is Mode.SAMPLED:
        reference = first.observed_first_labels[0]
    else:
        reference = _exact_reference(
            ensemble, set(first.observed_first_labels), decomp, sigma, target_group
        )
    in_group = [lab for lab, _ in _sigma_entries_in_group(decomp, sigma, target_group)]
    reference_index = in_group.index(reference)
    _, sigma_prime = build_sigma_prime(decomp, sigma, target_group, reference_index)
    if reference not in subensembles or (
        config.mode is Mode.SAMPLED and subensembles[reference].size == 0
    ):
        raise EmptySelectionError(
            f"no system left with auxiliary outcome {reference}; retry with a "
            "larger ensemble_size"
        )
    second, _ = run_stage(
        subensembles[reference], sigma_prime, app, decomp, target_group,
        StageKind.SIGMA_PRIME, config, rng, transcript, clock,
    )
    if not second.consistent:
        return Classification(
            verdict=Verdict.NON_LUDERS,
            detected_at=StageKind.SIGMA_PRIME,
            evidence=(first, second),
            false_acceptance_bound=None,
            transcript=tuple(transcript),
            target_eigenvalue=target_label,
            reference_label=reference,
        )
    bound = None
    if config.mode is Mode.SAMPLED:
        bound = (1.0 - config.min_disturbance) ** (first.trials + second.trials)
    return Classification(
        verdict=Verdict.LUDERS,
        detected_at=None,
        evidence=(first, second),
        false_acceptance_bound=bound,
        transcript=tuple(transcript),
        target_eigenvalue=target_label,
        reference_label=reference,
    )
