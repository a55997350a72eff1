"""Reference stabilizer simulation of memory circuits with Stim.

Operation names of :class:`~.circuit.SurfaceCodeCircuit` are Stim gate names,
except ``ROUND_START`` which becomes a ``TICK`` carrying any injected faults.
Detectors and the observable are annotated so that Stim evaluates them itself.
"""

import logging

import numpy as np
import stim

from .circuit import NOISE
from .exceptions import DimensionError

logger = logging.getLogger(__name__)

_FAULT_GATES = (None, "X", "Y", "Z")


def to_stim(circuit, faults=None):
    """Translate ``circuit`` into an annotated :class:`stim.Circuit`.

    ``faults`` holds one shot of injected labels with shape ``(rounds, qubits)``.
    """
    if faults is not None and faults.shape != (circuit.rounds, circuit.qubits):
        raise DimensionError(f"Faults of shape {faults.shape} do not match one shot of the circuit")
    result = stim.Circuit()
    for op in circuit.operations:
        if op.name == "ROUND_START":
            result.append("TICK")
            if faults is None:
                continue
            for label in (1, 2, 3):
                targets = np.flatnonzero(faults[int(op.arg)] == label).tolist()
                if targets:
                    result.append(_FAULT_GATES[label], targets)
        elif op.name in NOISE:
            result.append(op.name, [int(q) for q in op.targets], float(op.arg))
        else:
            result.append(op.name, [int(q) for q in op.targets])
    total = circuit.measurements
    for det in circuit.detectors:
        result.append("DETECTOR", [stim.target_rec(r - total) for r in det.records], list(det.coords))
    result.append("OBSERVABLE_INCLUDE", [stim.target_rec(r - total) for r in circuit.observable], 0)
    return result


def _sample(stim_circuit, shots, rng):
    sampler = stim_circuit.compile_detector_sampler(seed=int(rng.integers(2**63)))
    detectors, observables = sampler.sample(shots, separate_observables=True)
    return np.asarray(detectors, dtype=bool), np.asarray(observables, dtype=bool)[:, 0]


def sample_tableau(circuit, shots, rng, faults=None):
    """Detector events and observable flips per shot from Stim.

    Without injected faults every shot comes from one compiled sampler,
    otherwise each shot compiles its own circuit.
    """
    if faults is None:
        detectors, observable = _sample(to_stim(circuit), shots, rng)
    else:
        if len(faults) != shots:
            raise DimensionError(f"Expected faults for {shots} shots, got {len(faults)}")
        pairs = [_sample(to_stim(circuit, faults[s]), 1, rng) for s in range(shots)]
        detectors = np.concatenate([d for d, _ in pairs])
        observable = np.concatenate([o for _, o in pairs])
    logger.debug(f"Sampled {shots} reference shots over {len(circuit.detectors)} detectors")
    return detectors, observable
