"""Command line interface: ``rumspec <group> <command> [options]``.

Exit codes: 0 success, 1 domain error (including failed verification),
2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

import numpy as np

from . import gallery
from .basis import (
    RestrictionTower,
    check_truncated_basis,
    inverse_limit_basis,
    reconstruct_coefficients,
)
from .flex import band_report, factor_periodic_flex
from .framework import FrameworkError, cube, generate_patch, supercell, verify_flex
from .io import (
    dumps,
    field_from_json,
    field_to_json,
    framework_from_json,
    framework_to_json,
    patch_to_json,
    read_json,
)
from .spectrum import (
    DEFAULT_TOL,
    SliceSpec,
    TorusGrid,
    default_resolution,
    detect_linear_structure,
    refine_root,
    scan_geometric_slice,
    scan_rum_spectrum,
    sweep_moduli,
)
from .symbol import assemble_transfer_function, evaluate, kernel_basis, psi_at_inverse, symbolic_determinant

FMT = "%.12e"


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [_angle(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse number list {text!r}") from exc


def _angle(text: str) -> float:
    """Float, optionally written with 'pi' (e.g. 2pi/3, -pi)."""
    t = text.strip().lower().replace(" ", "")
    if "pi" not in t:
        return float(t)
    num, _, den = t.partition("/")
    head = num.replace("*", "").replace("pi", "")
    coeff = {"": 1.0, "+": 1.0, "-": -1.0}[head] if head in ("", "+", "-") else float(head)
    return coeff * math.pi / (float(den) if den else 1.0)


def _complexes(text: str) -> list[complex]:
    try:
        return [complex(t.strip().replace("i", "j")) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse complex list {text!r}") from exc


def _fmt_c(z: complex) -> str:
    return f"{FMT % z.real}{'+' if z.imag >= 0 else '-'}{FMT % abs(z.imag)}j"


def _framework(args):
    if getattr(args, "framework_file", None):
        fw = framework_from_json(read_json(args.framework_file))
    elif not args.framework:
        raise UsageError("need --framework or --framework-file")
    else:
        fw = gallery.get(args.framework)
    if getattr(args, "supercell", None):
        fw = supercell(fw, [int(p) for p in args.supercell.split(",")])
    return fw


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _index(text: str | None):
    if text is None:
        return 0
    parts = [int(p) for p in text.split(",")]
    return parts[0] if len(parts) == 1 else tuple(parts)


def _box(args, d: int):
    if getattr(args, "box", None):
        ranges = []
        for part in args.box.split(","):
            lo, _, hi = part.partition(":")
            ranges.append((int(lo), int(hi or lo)))
        if len(ranges) != d:
            raise UsageError(f"--box needs {d} ranges")
        return tuple(ranges)
    return cube(d, args.radius)


# --------------------------------------------------------------------------
# gallery


def cmd_gallery_list(args) -> int:
    for name in gallery.names():
        entry = gallery.ENTRIES[name]
        fw = entry.framework()
        m, n = assemble_transfer_function(fw).shape
        flexes = ",".join(sorted(entry.flexes)) or "-"
        print(f"{name}\td={fw.dimension}\tjoints={fw.motif.n_joints}\tedges={fw.motif.n_edges}\tsymbol={m}x{n}\tflexes={flexes}")
    return 0


def cmd_gallery_export(args) -> int:
    _emit(dumps(framework_to_json(gallery.get(args.name))), args.out)
    return 0


def cmd_gallery_flex(args) -> int:
    fw = gallery.get(args.name)
    u = gallery.named_flex(args.name, args.flex, _index(args.index))
    patch = generate_patch(fw, _box(args, fw.dimension))
    _emit(dumps(field_to_json(u, patch)), args.out)
    return 0


# --------------------------------------------------------------------------
# symbol


def _symbol(args):
    M = assemble_transfer_function(_framework(args))
    return M.substitute_inverse() if args.convention == "inverse" else M


def cmd_symbol_eval(args) -> int:
    M = assemble_transfer_function(_framework(args))
    if args.theta is not None:
        z = np.exp(1j * np.array(_floats(args.theta)))
    elif args.z is not None:
        z = np.array(_complexes(args.z))
    else:
        raise UsageError("need --z or --theta")
    E = psi_at_inverse(M, z) if args.at_inverse else evaluate(M, z)
    lines = ["\t".join([""] + list(M.col_labels))]
    for label, row in zip(M.row_labels, E.matrix):
        lines.append("\t".join([label] + [_fmt_c(v) for v in row]))
    if args.kernel:
        for i, v in enumerate(kernel_basis(E, args.rank_tol)):
            lines.append(f"kernel_{i + 1}\t" + "\t".join(_fmt_c(x) for x in v))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_symbol_det(args) -> int:
    M = _symbol(args)
    rows = args.rows.split(",") if args.rows else None
    cols = args.cols.split(",") if args.cols else None
    sel_rows = rows if rows is not None else list(M.row_labels)
    sel_cols = cols if cols is not None else list(M.col_labels)
    if len(sel_rows) != len(sel_cols):
        raise UsageError(f"selection is {len(sel_rows)}x{len(sel_cols)}; determinants need a square selection")
    det = symbolic_determinant(M, rows, cols)
    _emit(det.to_text() + "\n", args.out)
    return 0


def cmd_symbol_export(args) -> int:
    _emit(dumps(_symbol(args).to_json()), args.out)
    return 0


# --------------------------------------------------------------------------
# spectrum


def _grid(args, d: int) -> TorusGrid:
    fixed = {}
    for item in args.fix_axis or []:
        axis, _, theta = item.partition("=")
        if not theta:
            raise UsageError(f"--fix-axis expects i=theta, got {item!r}")
        i = int(axis) - 1
        if not 0 <= i < d:
            raise UsageError(f"--fix-axis index {axis} out of range 1..{d}")
        fixed[i] = _angle(theta)
    return TorusGrid(args.resolution or default_resolution(d), d, tuple(fixed.items()))


def cmd_spectrum_scan(args) -> int:
    fw = _framework(args)
    grid = _grid(args, fw.dimension)
    if args.slice:
        moduli = _floats(args.slice)
        if len(moduli) != fw.dimension:
            raise UsageError(f"--slice needs {fw.dimension} moduli")
        report = scan_geometric_slice(fw, SliceSpec(tuple(moduli)), grid, args.tol, args.threads)
    else:
        report = scan_rum_spectrum(fw, grid, args.tol, args.threads)
    if args.lines and not grid.fixed:
        detect_linear_structure(report, max_den=args.max_den)
    text = report.to_csv()
    if args.out:
        Path(args.out).write_text(text)
        free = len(grid.free_axes)
        svg = args.svg or (str(Path(args.out).with_suffix(".svg")) if free == 2 and not args.no_plot else None)
        if svg:
            from .plotting import heatmap

            heatmap(report, svg)
    else:
        sys.stdout.write(text)
    summary = sys.stderr if not args.out else sys.stdout
    pts = report.flagged_points
    print(f"flagged\t{len(pts)}\tof\t{len(report.thetas)}", file=summary)
    for p, r in zip(pts, report.ratio[report.flagged]):
        print("point\t" + "\t".join(FMT % t for t in p) + "\t" + FMT % r, file=summary)
    for ln in report.lines:
        print("line\t" + "\t".join(FMT % t for t in ln.point) + "\tdirection\t"
              + ",".join(map(str, ln.direction)) + "\t" + FMT % ln.fraction, file=summary)
    return 0


def cmd_spectrum_refine(args) -> int:
    fw = _framework(args)
    phases = np.array(_floats(args.seed))
    moduli = np.array(_floats(args.moduli)) if args.moduli else np.ones_like(phases)
    if len(phases) != fw.dimension or len(moduli) != fw.dimension:
        raise UsageError(f"seed and moduli need {fw.dimension} components")
    res = refine_root(fw, moduli * np.exp(1j * phases), args.tol, vary_moduli=args.vary_moduli or None,
                      trust_radius=args.trust)
    print("phases\t" + "\t".join(FMT % t for t in res.phases))
    print("moduli\t" + "\t".join(FMT % r for r in np.abs(res.point)))
    print(f"sigma\t{FMT % res.sigma}")
    print(f"converged\t{int(res.converged)}")
    return 0 if res.converged else 1


def cmd_spectrum_sweep(args) -> int:
    fw = _framework(args)
    lo, hi, n = args.range.split(",")
    values = np.linspace(float(lo), float(hi), int(n))
    grid = TorusGrid(args.resolution or default_resolution(fw.dimension), fw.dimension)
    minima, res = sweep_moduli(fw, args.axis - 1, values, None, grid, args.tol, args.threads)
    for r, m in zip(values, minima):
        print(f"slice\t{FMT % r}\t{FMT % m}")
    print("root\t" + "\t".join(_fmt_c(z) for z in res.point))
    print(f"sigma\t{FMT % res.sigma}\nconverged\t{int(res.converged)}")
    return 0 if res.converged else 1


# --------------------------------------------------------------------------
# flex


def cmd_flex_make(args) -> int:
    fw = _framework(args)
    if args.theta is not None:
        omega = np.exp(1j * np.array(_floats(args.theta)))
        if args.moduli:
            omega = omega * np.array(_floats(args.moduli))
    elif args.omega is not None:
        omega = np.array(_complexes(args.omega))
    else:
        raise UsageError("need --omega or --theta")
    if len(omega) != fw.dimension:
        raise UsageError(f"multifactor needs {fw.dimension} components")
    kernel = kernel_basis(psi_at_inverse(assemble_transfer_function(fw), omega), args.rank_tol)
    if not kernel:
        raise FrameworkError("Psi(omega^-1) has trivial kernel at this multifactor")
    if not 0 <= args.kernel_index < len(kernel):
        raise UsageError(f"--kernel-index must lie in 0..{len(kernel) - 1}")
    patch = generate_patch(fw, _box(args, fw.dimension))
    u = factor_periodic_flex(fw, omega, kernel[args.kernel_index])
    _emit(dumps(field_to_json(u, patch)), args.out)
    return 0


def _field_patch(args, fw):
    data = read_json(args.field)
    u = field_from_json(data, fw.dimension)
    if args.radius is not None or args.box:
        box = _box(args, fw.dimension)
    elif data:
        cells = np.array([row["cell"] for row in data])
        box = tuple(zip(cells.min(axis=0).tolist(), cells.max(axis=0).tolist()))
    else:
        box = cube(fw.dimension, 2)
    return u, generate_patch(fw, box)


def cmd_flex_verify(args) -> int:
    fw = _framework(args)
    u, patch = _field_patch(args, fw)
    rep = verify_flex(patch, u, args.tol)
    print(f"residual\t{FMT % rep.max_residual}")
    if rep.worst_bar is not None:
        e, shift = patch.bar_edges[rep.worst_bar]
        print(f"worst_bar\te{e + 1}\t{','.join(map(str, shift))}")
    print(f"passed\t{int(rep.passed)}")
    return 0 if rep.passed else 1


def cmd_flex_band(args) -> int:
    fw = _framework(args)
    u, patch = _field_patch(args, fw)
    rep = band_report(u, patch)
    print(f"t\t{rep.t}\nband_limited\t{int(rep.band)}\nfinite_support\t{int(rep.finite)}")
    for w in rep.witnesses:
        print("witness\t" + ",".join(map(str, w)))
    return 0


# --------------------------------------------------------------------------
# basis and patch


def cmd_basis_build(args) -> int:
    fw = _framework(args)
    radii = [int(r) for r in args.radii.split(",")]
    tb = inverse_limit_basis(RestrictionTower.cubes(fw, radii, args.margin))
    ok, ranks = check_truncated_basis(tb)
    out = {
        "framework": fw.name,
        "radii": radii,
        "margin": args.margin,
        "dims": tb.dims,
        "counts": tb.counts(),
        "ranks": ranks,
        "consistent": ok,
        "max_lower_restriction": float(np.max(tb.projection_norms, initial=0.0)),
        "top_joints": [{"joint": kp, "cell": list(k)} for kp, k in tb.top.labels],
        "levels": [
            [{"re": np.round(col.real, 12).tolist(), "im": np.round(col.imag, 12).tolist()} for col in lv.T]
            for lv in tb.levels
        ],
    }
    _emit(dumps(out), args.out)
    return 0 if ok else 1


def cmd_basis_expand(args) -> int:
    name = args.set
    fw = gallery.get(name)
    u, patch = _field_patch(args, fw)
    els, omit, method = gallery.spanning_set(name, patch)
    rec = reconstruct_coefficients(u, els, patch, omit=omit, method=method)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["element", "re", "im"])
    for n, c in sorted(rec.as_dict().items()):
        if abs(c) > 1e-12 or args.all:
            w.writerow([n, FMT % c.real, FMT % c.imag])
    _emit(buf.getvalue(), args.out)
    print(f"residual\t{FMT % rec.residual}\tunique\t{rec.unique}", file=sys.stderr)
    return 0 if rec.residual <= args.tol else 1


def cmd_patch_export(args) -> int:
    fw = _framework(args)
    _emit(dumps(patch_to_json(generate_patch(fw, _box(args, fw.dimension)))), args.out)
    return 0


# --------------------------------------------------------------------------
# parser


def _add_fw(p):
    p.add_argument("--framework", "-f", choices=gallery.names(), help="gallery framework name")
    p.add_argument("--framework-file", help="framework JSON file")
    p.add_argument("--supercell", help="coarser periodic structure, e.g. 2,2,2")


def _add_patch(p, radius=2):
    p.add_argument("--radius", type=int, default=radius, help="cube patch radius in cells")
    p.add_argument("--box", help="explicit cell box, e.g. -1:1,0:2")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rumspec", description="Rigid unit mode spectra and flexes of crystal frameworks.")
    groups = parser.add_subparsers(dest="group", required=True)

    g = groups.add_parser("gallery", help="built-in frameworks").add_subparsers(dest="command", required=True)
    p = g.add_parser("list")
    p.set_defaults(func=cmd_gallery_list)
    p = g.add_parser("export")
    p.add_argument("name", choices=gallery.names())
    p.add_argument("--out")
    p.set_defaults(func=cmd_gallery_export)
    p = g.add_parser("flex")
    p.add_argument("name", choices=gallery.names())
    p.add_argument("flex")
    p.add_argument("--index", help="integer or comma-separated tuple")
    _add_patch(p, 4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gallery_flex)

    s = groups.add_parser("symbol", help="transfer function").add_subparsers(dest="command", required=True)
    p = s.add_parser("eval")
    _add_fw(p)
    p.add_argument("--z", help="complex point, e.g. 1,-1+0j")
    p.add_argument("--theta", help="torus phases; z = exp(i theta)")
    p.add_argument("--at-inverse", action="store_true", help="evaluate Psi(z^-1)")
    p.add_argument("--kernel", action="store_true", help="also print a kernel basis")
    p.add_argument("--rank-tol", type=float, default=1e-9)
    p.add_argument("--out")
    p.set_defaults(func=cmd_symbol_eval)
    for name, func in (("det", cmd_symbol_det), ("export", cmd_symbol_export)):
        p = s.add_parser(name)
        _add_fw(p)
        p.add_argument("--convention", choices=["inverse", "direct"], default="inverse",
                       help="inverse: Psi(z^-1) (default); direct: Psi(z)")
        if name == "det":
            p.add_argument("--rows", help="row labels, e.g. e4,e5,e6")
            p.add_argument("--cols", help="column labels, e.g. v1z,v2x,v2y")
        p.add_argument("--out")
        p.set_defaults(func=func)

    sp = groups.add_parser("spectrum", help="spectrum scans").add_subparsers(dest="command", required=True)
    p = sp.add_parser("scan")
    _add_fw(p)
    p.add_argument("--resolution", type=int)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--slice", help="moduli r1,r2,... for a geometric slice")
    p.add_argument("--fix-axis", action="append", help="i=theta (1-based axis); repeatable")
    p.add_argument("--threads", type=int)
    p.add_argument("--lines", action="store_true", help="detect linear structure")
    p.add_argument("--max-den", type=int, default=8)
    p.add_argument("--out", help="CSV path; a heatmap is written next to it for 2D scans")
    p.add_argument("--svg", help="explicit heatmap path")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_spectrum_scan)
    p = sp.add_parser("refine")
    _add_fw(p)
    p.add_argument("--seed", required=True, help="phases theta_1,...,theta_d")
    p.add_argument("--moduli")
    p.add_argument("--vary-moduli", action="store_true")
    p.add_argument("--trust", type=float, default=0.1)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.set_defaults(func=cmd_spectrum_refine)
    p = sp.add_parser("sweep")
    _add_fw(p)
    p.add_argument("--axis", type=int, default=1, help="1-based axis whose modulus is swept")
    p.add_argument("--range", default="1.1,8,24", help="lo,hi,count")
    p.add_argument("--resolution", type=int)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_spectrum_sweep)

    fl = groups.add_parser("flex", help="flexes").add_subparsers(dest="command", required=True)
    p = fl.add_parser("make")
    _add_fw(p)
    p.add_argument("--omega", help="complex multifactor")
    p.add_argument("--theta", help="multifactor phases")
    p.add_argument("--moduli", help="multifactor moduli (with --theta)")
    p.add_argument("--kernel-index", type=int, default=0)
    p.add_argument("--rank-tol", type=float, default=1e-9)
    _add_patch(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_flex_make)
    for name, func in (("verify", cmd_flex_verify), ("band", cmd_flex_band)):
        p = fl.add_parser(name)
        _add_fw(p)
        p.add_argument("--field", required=True)
        p.add_argument("--radius", type=int)
        p.add_argument("--box")
        p.add_argument("--tol", type=float, default=1e-9)
        p.set_defaults(func=func)

    b = groups.add_parser("basis", help="truncated free bases").add_subparsers(dest="command", required=True)
    p = b.add_parser("build")
    _add_fw(p)
    p.add_argument("--radii", default="1,2,3")
    p.add_argument("--margin", type=int, default=2)
    p.add_argument("--out")
    p.set_defaults(func=cmd_basis_build)
    p = b.add_parser("expand")
    p.add_argument("--field", required=True)
    p.add_argument("--set", required=True, choices=gallery.SPANNING_SETS)
    p.add_argument("--radius", type=int)
    p.add_argument("--box")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--all", action="store_true", help="list zero coefficients too")
    p.add_argument("--out")
    p.set_defaults(func=cmd_basis_expand)

    pt = groups.add_parser("patch", help="finite patches").add_subparsers(dest="command", required=True)
    p = pt.add_parser("export")
    _add_fw(p)
    _add_patch(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_patch_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rumspec: error: {exc}", file=sys.stderr)
        return 2
    except (FrameworkError, ValueError, KeyError, IndexError, OSError) as exc:
        print(f"rumspec: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
