import csv
import io
import json
import logging
import math
import sys
from functools import lru_cache

import numpy as np

from .exceptions import DimensionError

logger = logging.getLogger(__name__)

PAULI_NAMES = ("I", "X", "Y", "Z")

PAULIS = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

# single-qubit Paulis as monomials: P|c> = phase[c] |perm[c]>
_MONOMIAL_PERMS = np.array([[0, 1], [1, 0], [1, 0], [0, 1]])
_MONOMIAL_PHASES = np.array([[1, 1], [1, 1], [1j, -1j], [1, -1]], dtype=complex)


def pauli_digits(index, n):
    """Per-qubit Pauli digits of a label index, qubit 0 most significant."""
    if not 0 <= index < 4**n:
        raise DimensionError(f"Pauli index {index} out of range for {n} qubits")
    digits = []
    for _ in range(n):
        digits.append(index % 4)
        index //= 4
    return tuple(reversed(digits))


def pauli_label(index, n):
    """String label of a Pauli index, e.g. ``"XZ"``."""
    return "".join(PAULI_NAMES[d] for d in pauli_digits(index, n))


def pauli_index(label):
    """Index of a Pauli label; inverse of :func:`pauli_label`."""
    index = 0
    for char in label.upper():
        if char not in PAULI_NAMES:
            raise DimensionError(f"Invalid Pauli label: {label!r}")
        index = 4 * index + PAULI_NAMES.index(char)
    return index


def pauli_matrix(index, n):
    """Dense matrix of the Pauli string with the given index."""
    matrix = np.ones((1, 1), dtype=complex)
    for digit in pauli_digits(index, n):
        matrix = np.kron(matrix, PAULIS[digit])
    return matrix


@lru_cache(maxsize=8)
def pauli_basis(n):
    """All ``4**n`` Pauli strings stacked along the first axis."""
    basis = np.array([pauli_matrix(i, n) for i in range(4**n)])
    basis.setflags(write=False)
    return basis


def pauli_monomial(digits):
    """Permutation and phase of a Pauli string given by its digits.

    The string maps basis state ``c`` to ``phase[c]`` times ``perm[c]``.
    """
    perm = np.zeros(1, dtype=int)
    phase = np.ones(1, dtype=complex)
    for digit in digits:
        perm = (2 * perm[:, None] + _MONOMIAL_PERMS[digit][None, :]).reshape(-1)
        phase = (phase[:, None] * _MONOMIAL_PHASES[digit][None, :]).reshape(-1)
    return perm, phase


def conjugate_monomial(matrix, perm, phase):
    """Return ``G @ matrix @ G^dag`` for a monomial ``G`` given as (perm, phase)."""
    out = np.empty_like(matrix, dtype=complex)
    out[np.ix_(perm, perm)] = phase[:, None] * matrix * np.conj(phase)[None, :]
    return out


def pauli_expectations(op, n):
    """Return ``Tr(P op)`` for every Pauli string ``P`` on ``n`` qubits."""
    op = np.asarray(op)
    if op.shape != (2**n, 2**n):
        raise DimensionError(f"Operator shape {op.shape} does not match {n} qubits")
    if n == 0:
        return op.reshape(1).astype(complex)
    t = op.reshape([2] * (2 * n))
    # PAULIS[p, j, i] pairs with op[i, j]
    for q in range(n):
        remaining = n - q
        t = np.tensordot(PAULIS, t, axes=([1, 2], [q + remaining, q]))
        t = np.moveaxis(t, 0, q)
    return t.reshape(-1)


def is_power_of_two(value):
    return value >= 1 and (value & (value - 1)) == 0


def qubit_count(dim):
    """Number of qubits of a Hilbert space of dimension ``dim``."""
    if not is_power_of_two(dim):
        raise DimensionError(f"Dimension {dim} is not a power of two")
    return int(math.log2(dim))


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    return value


def dumps_json(payload):
    """Serialize a payload with numpy values and non-finite floats flagged as strings."""
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True)


def format_cell(value):
    if value is None:
        return "not-fittable"
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def render_csv(header, rows, config=None):
    """Render rows as CSV text, prefixed by a ``# config:`` line when given."""
    buffer = io.StringIO()
    if config is not None:
        buffer.write(f"# config: {json.dumps(_jsonable(config), sort_keys=True)}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(v) for v in row])
    return buffer.getvalue()


def write_output(text, path=None):
    """Write rendered output to ``path`` or stdout."""
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    logger.info(f"Wrote {path}")
