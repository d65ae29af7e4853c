"""JSON (de)serialisation of frameworks, patches, fields and bases."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .framework import (
    CrystalFramework,
    Edge,
    ExplicitField,
    FinitePatch,
    Motif,
    PeriodLattice,
    VelocityField,
)


def framework_to_json(fw: CrystalFramework) -> dict:
    return {
        "name": fw.name,
        "dimension": fw.dimension,
        "period_basis": fw.lattice.basis.tolist(),
        "joints": [{"id": i, "coords": p.tolist()} for i, p in zip(fw.motif.joint_ids, fw.motif.joints)],
        "edges": [
            {"a": e.a, "b": e.b, "offset_a": list(e.offset_a), "offset_b": list(e.offset_b)}
            for e in fw.motif.edges
        ],
    }


def framework_from_json(data: dict) -> CrystalFramework:
    ids = [j["id"] for j in data["joints"]]

    def joint(ref):
        return ids.index(ref) if isinstance(ref, str) else int(ref)

    edges = [Edge(joint(e["a"]), joint(e["b"]), tuple(e["offset_a"]), tuple(e["offset_b"])) for e in data["edges"]]
    fw = CrystalFramework(
        PeriodLattice(np.array(data["period_basis"], dtype=float)),
        Motif(np.array([j["coords"] for j in data["joints"]], dtype=float), tuple(edges), tuple(map(str, ids))),
        data.get("name", "framework"),
    )
    if "dimension" in data and int(data["dimension"]) != fw.dimension:
        raise ValueError("declared dimension does not match the period basis")
    return fw


def patch_to_json(patch: FinitePatch) -> dict:
    return {
        "framework": patch.framework.name,
        "box": [list(r) for r in patch.box],
        "joints": [
            {"joint": kp, "cell": list(k), "coords": p.tolist()}
            for (kp, k), p in zip(patch.labels, patch.positions)
        ],
        "bars": [
            {"a": a, "b": b, "edge": e, "shift": list(s), "vector": v.tolist()}
            for (a, b), (e, s), v in zip(patch.bars, patch.bar_edges, patch.bar_vectors)
        ],
    }


def field_to_json(u: VelocityField, patch: FinitePatch) -> list[dict]:
    vals = u.on_patch(patch)
    return [
        {"joint": kp, "cell": list(k), "velocity_re": v.real.tolist(), "velocity_im": v.imag.tolist()}
        for (kp, k), v in zip(patch.labels, vals)
    ]


def field_from_json(data, dimension: int | None = None, zero_outside: bool = True) -> ExplicitField:
    """Fields listed joint by joint; unlisted joints carry zero velocity by default."""
    values = {}
    for row in data:
        v = np.asarray(row["velocity_re"], dtype=float) + 1j * np.asarray(row.get("velocity_im", 0.0), dtype=float)
        values[(int(row["joint"]), tuple(int(c) for c in row["cell"]))] = v
        dimension = dimension or len(v)
    if dimension is None:
        raise ValueError("empty field needs an explicit dimension")
    return ExplicitField(values, dimension, zero_outside)


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, fixed indentation."""
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def write_json(obj, path: str | Path) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path: str | Path):
    return json.loads(Path(path).read_text())
