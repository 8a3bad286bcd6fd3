"""JSON schema for state-set files, parsed with pydantic.

Complex numbers are two-element arrays [re, im]. Unitaries are given on Bob's space; `direction` names the
one-way protocol to test, and a BtoA file is turned into the transposed set on load.

    {
      "d": 4,
      "base": "phi_plus",
      "unitaries": [{"kind": "weyl", "n": 0, "m": 0}, {"kind": "matrix", "rows": [[[1, 0], ...], ...]}],
      "direction": "AtoB"
    }
"""

import json
from pathlib import Path
from typing import Annotated, Literal

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from core.states import (
    BipartiteState,
    Direction,
    StateSet,
    WeylIndex,
    make_weyl,
    phi_plus,
    transpose_set,
)

ComplexEntry = tuple[float, float]
ComplexMatrix = list[list[ComplexEntry]]


class StateSetSpecError(Exception):
    """State-set file could not be read, parsed or validated."""


class WeylUnitarySpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["weyl"] = "weyl"
    n: int
    m: int


class MatrixUnitarySpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["matrix"] = "matrix"
    rows: ComplexMatrix


UnitarySpec = Annotated[WeylUnitarySpec | MatrixUnitarySpec, Field(discriminator="kind")]


def _to_array(matrix: ComplexMatrix) -> NDArray[np.complex128]:
    return np.array([[complex(re, im) for re, im in row] for row in matrix], dtype=np.complex128)


def _from_array(array: NDArray[np.complex128]) -> ComplexMatrix:
    return [[(float(z.real), float(z.imag)) for z in row] for row in array]


class StateSetSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d: int = Field(ge=1, le=32)
    base: Literal["phi_plus"] | ComplexMatrix = "phi_plus"
    unitaries: list[UnitarySpec] = Field(min_length=1)
    direction: Direction = Direction.A_TO_B

    @property
    def is_weyl(self) -> bool:
        return all(isinstance(u, WeylUnitarySpec) for u in self.unitaries)

    def weyl_indices(self) -> tuple[WeylIndex, ...] | None:
        """Weyl labels of the unitaries, or None when any unitary is matrix-typed."""
        if not self.is_weyl:
            return None
        return tuple(WeylIndex(u.n, u.m, self.d) for u in self.unitaries if isinstance(u, WeylUnitarySpec))

    def unitary_matrix(self, k: int) -> NDArray[np.complex128]:
        unitary = self.unitaries[k]
        if isinstance(unitary, WeylUnitarySpec):
            return make_weyl(WeylIndex(unitary.n, unitary.m, self.d))
        return _to_array(unitary.rows)

    def to_state_set(self) -> StateSet:
        """The AtoB state set with the unitaries on Bob's space, whatever `direction` says."""
        base = phi_plus(self.d) if self.base == "phi_plus" else BipartiteState(_to_array(self.base))
        return StateSet(
            base=base,
            unitaries=tuple(self.unitary_matrix(k) for k in range(len(self.unitaries))),
            direction=Direction.A_TO_B,
            weyl_indices=self.weyl_indices(),
        )

    def oriented_state_set(self) -> StateSet:
        """The state set for the requested direction: transposed onto Alice's space for BtoA."""
        ss = self.to_state_set()
        return transpose_set(ss) if self.direction is Direction.B_TO_A else ss


def state_set_to_spec(ss: StateSet) -> StateSetSpec:
    """Writes any StateSet back in file form: explicit base matrix, Weyl labels kept when known."""
    requested = ss.direction
    if requested is Direction.B_TO_A:
        ss = transpose_set(ss)
    unitaries: list[WeylUnitarySpec | MatrixUnitarySpec]
    if ss.weyl_indices is not None:
        unitaries = [WeylUnitarySpec(n=idx.n, m=idx.m) for idx in ss.weyl_indices]
    else:
        unitaries = [MatrixUnitarySpec(rows=_from_array(op)) for op in ss.unitaries]
    return StateSetSpec(
        d=ss.dB,
        base=_from_array(ss.base.amplitudes),
        unitaries=unitaries,
        direction=requested,
    )


def dump_state_set_spec(spec: StateSetSpec, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(spec.model_dump_json(indent=2) + "\n")


def _line_of_unitary(text: str, k: int) -> int | None:
    """Line number of the k-th unitary entry: only unitaries carry a "kind" key."""
    position = -1
    for _ in range(k + 1):
        position = text.find('"kind"', position + 1)
        if position < 0:
            return None
    return text.count("\n", 0, position) + 1


def _describe(path: Path, text: str, unitary: int | None, message: str) -> str:
    line = _line_of_unitary(text, unitary) if unitary is not None else None
    where = f"{path}:{line}" if line is not None else f"{path}"
    return f"{where}: {message}"


def load_state_set_spec(path: Path) -> StateSetSpec:
    """Reads and validates a state-set file, turning every failure into a StateSetSpecError.

    :param path: JSON state-set file.
    :type path: Path
    :raises StateSetSpecError: on unreadable files, JSON syntax errors (with line and column) or schema errors.
    :return: the validated spec; semantic checks run when it is turned into a StateSet.
    :rtype: StateSetSpec
    """
    try:
        text = path.read_text()
    except OSError as e:
        raise StateSetSpecError(f"{path}: cannot read file ({e.strerror})") from e

    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise StateSetSpecError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e

    try:
        return StateSetSpec.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(part) for part in first["loc"])
        unitary = first["loc"][1] if len(first["loc"]) > 1 and first["loc"][0] == "unitaries" else None
        message = f"{loc}: {first['msg']}"
        raise StateSetSpecError(_describe(path, text, unitary if isinstance(unitary, int) else None, message)) from e


def load_state_set(path: Path) -> tuple[StateSetSpec, StateSet]:
    """Loads a file and builds the state set for its requested direction, enforcing every StateSet invariant.

    :raises StateSetSpecError: with the file path and, where a unitary is at fault, its line.
    """
    spec = load_state_set_spec(path)
    text = path.read_text()
    for k in range(len(spec.unitaries)):
        try:
            op = spec.unitary_matrix(k)
        except ValueError as e:
            raise StateSetSpecError(_describe(path, text, k, f"unitaries.{k}: {e}")) from e
        if op.shape != (spec.d, spec.d):
            message = f"unitaries.{k}: expected a {spec.d}x{spec.d} matrix, got {op.shape[0]}x{op.shape[1]}"
            raise StateSetSpecError(_describe(path, text, k, message))
    try:
        return spec, spec.oriented_state_set()
    except ValueError as e:
        unitary = _unitary_named_in(str(e))
        raise StateSetSpecError(_describe(path, text, unitary, str(e))) from e


def _unitary_named_in(message: str) -> int | None:
    words = message.split()
    for first, second in zip(words, words[1:], strict=False):
        if first in {"unitary", "states"} and second.isdigit():
            return int(second)
    return None
