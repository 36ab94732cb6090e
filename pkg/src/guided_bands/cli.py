"""Command-line entry point: ``guided-bands <command> <file> [options]``."""
from __future__ import annotations

import argparse
import datetime
import hashlib
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .graph import GraphSpecError, GuidedPotential, build_cylinder, connectivity_check, load_and_validate
from .numerics import TorusGrid
from .report import IoFailure, jsonable, new_bundle, render_svg, write_report
from .spectra import ConvergencePolicy, WindowExhausted, compute_guided_bands, h0_spectrum, mu_spectrum
from .theorems import (asymptotics_probe, bandwidth_sum_check, check_bridge_bound, check_envelope,
                       delta_profile)

log = logging.getLogger("guided_bands")

EXIT_OK, EXIT_INVALID, EXIT_CHECK, EXIT_WINDOW, EXIT_USAGE = 0, 1, 2, 3, 64
COMMANDS = ("validate", "h0-bands", "guided", "check", "asymptotics", "plot")


@dataclass
class RunConfig:
    command: str
    input: str
    n_full: int = 64
    n_guided: int = 64
    n_perp: int = 64
    r0: int | None = None
    r_max: int | None = None
    tol_window: float = 1e-9
    margin: float | None = None
    tol_flat: float | None = None
    t_values: list = field(default_factory=list)
    out_dir: str = ""
    normalize: bool = True

    def __post_init__(self):
        for name in ("n_full", "n_guided", "n_perp"):
            if getattr(self, name) < 4:
                raise ValueError(f"{name} must be >= 4")
        for name in ("tol_window", "margin", "tol_flat"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"{name} must be positive")

    def policy(self, strict=False) -> ConvergencePolicy:
        return ConvergencePolicy(r0=self.r0, r_max=self.r_max, tol_window=self.tol_window,
                                 margin=self.margin, strict=strict)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _t_list(text):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("t values must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="guided-bands", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("file")
    p.add_argument("--grid", type=int, default=64, help="torus points per dimension (all grids)")
    p.add_argument("--grid-full", type=int, help="override for the full torus grid")
    p.add_argument("--grid-guided", type=int, help="override for the guided torus grid")
    p.add_argument("--grid-perp", type=int, help="override for the perpendicular torus grid")
    p.add_argument("--window-tol", type=float, default=1e-9)
    p.add_argument("--r0", type=int)
    p.add_argument("--rmax", type=int)
    p.add_argument("--margin", type=float)
    p.add_argument("--tol-flat", type=float)
    p.add_argument("--t", type=_t_list, default=None, help="coupling constants, e.g. 50,100,200")
    p.add_argument("--out", help="output directory (default results/<input stem>)")
    p.add_argument("--no-normalize", action="store_true", help="do not shift W so that inf sigma(H0) = 0")
    p.add_argument("--strict", action="store_true", help="abort on the first window exhaustion")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _config(args) -> RunConfig:
    g = args.grid
    return RunConfig(command=args.command, input=args.file, n_full=args.grid_full or g,
                     n_guided=args.grid_guided or g, n_perp=args.grid_perp or g, r0=args.r0, r_max=args.rmax,
                     tol_window=args.window_tol, margin=args.margin, tol_flat=args.tol_flat,
                     t_values=args.t or [], out_dir=args.out or str(Path("results") / Path(args.file).stem),
                     normalize=not args.no_normalize)


def run(cfg: RunConfig, raw: bytes, strict: bool = False) -> tuple[int, object]:
    """Execute one command on an already-read document; returns (exit code, bundle)."""
    spec = load_and_validate(raw)
    cyl = build_cylinder(spec)
    conn = connectivity_check(spec, cyl)
    if not conn["connected"]:
        log.warning("graph is not connected (components=%d, index divisors=%s)",
                    conn["quotient_components"], conn["elementary_divisors"])
    # where the files land is not part of what was computed
    echo = {k: v for k, v in asdict(cfg).items() if k != "out_dir"}
    bundle = new_bundle(spec.to_dict(), hashlib.sha256(raw).hexdigest(), cfg.input, echo)
    bundle.connectivity = jsonable(conn)
    if cfg.command == "validate":
        return EXIT_OK, bundle

    bs = h0_spectrum(cyl, TorusGrid(cyl.dim_total, cfg.n_full), normalize=cfg.normalize, tol_flat=cfg.tol_flat)
    cyl = cyl.shifted(bs.shift)
    bundle.normalization_shift = bs.shift
    bundle.band_structure = jsonable({"points": bs.points, "branches": bs.branches, "bands": bs.bands,
                                      "rho": bs.rho, "inf0": bs.inf0, "flat_flags": bs.flat_flags})
    if cfg.command == "h0-bands":
        return EXIT_OK, bundle

    Q = GuidedPotential.from_spec(spec)
    policy = cfg.policy(strict)
    grid = TorusGrid(cyl.dim_guided, cfg.n_guided)
    grid_perp = TorusGrid(cyl.dim_perp, cfg.n_perp)
    exhausted = False
    if cfg.command == "asymptotics":
        ts = cfg.t_values or [50.0, 100.0, 200.0]
        rep = asymptotics_probe(cyl, Q, ts, grid, policy, grid_perp, bs.rho)
        if not conn["connected"]:
            rep.notes.append("graph not connected: theorem hypotheses fail")
            rep.records[0].passed = False if rep.records else None
        bundle.delta_profile = jsonable(delta_profile(cyl, Q, grid))
        bundle.reports = [jsonable(rep)]
        exhausted = any("window certification failed" in n for n in rep.notes)
    else:
        gb = compute_guided_bands(cyl, Q, grid, policy, grid_perp, bs.rho)
        mu = mu_spectrum(cyl, Q, grid_perp, policy, bs.rho)
        exhausted = gb.exhausted or mu.exhausted
        bundle.guided = jsonable(gb)
        bundle.mu = jsonable(mu)
        if cfg.command == "check":
            reps = [check_envelope(gb, Q, bs.rho), check_bridge_bound(gb, mu, cyl.beta_plus),
                    bandwidth_sum_check(bs, cyl)]
            if not conn["connected"]:
                for r in reps[:2]:
                    r.notes.append("graph not connected: theorem hypotheses fail")
                    if r.records:
                        r.records[0].passed = False
            bundle.reports = [jsonable(r) for r in reps]
    if exhausted:
        return EXIT_WINDOW, bundle
    if not bundle.all_passed:
        return EXIT_CHECK, bundle
    return EXIT_OK, bundle


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
    except ValueError as exc:
        print(f"guided-bands: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        raw = Path(args.file).read_bytes()
    except OSError as exc:
        print(f"guided-bands: cannot read {args.file}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        code, bundle = run(cfg, raw, strict=args.strict)
    except GraphSpecError as exc:
        print(f"guided-bands: invalid graph document: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except WindowExhausted as exc:
        print(f"guided-bands: {exc}", file=sys.stderr)
        return EXIT_WINDOW
    bundle.created = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    if cfg.command == "validate":
        c = bundle.connectivity
        print(f"{args.file}: valid (dim_total={bundle.spec['dim_total']}, dim_guided={bundle.spec['dim_guided']}, "
              f"vertices={len(bundle.spec['vertices'])}, edges={len(bundle.spec['edges'])}, "
              f"connected={c['connected']})")
        return code
    try:
        if cfg.command == "plot":
            path = render_svg(bundle, cfg.out_dir)
            print(f"wrote {path}" if path else "plot skipped: only 1 or 2 guided dimensions are drawn")
        else:
            for p in write_report(bundle, cfg.out_dir):
                print(f"wrote {p}")
    except IoFailure as exc:
        print(f"guided-bands: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if bundle.reports:
        for rep in bundle.reports:
            tag = "INFO" if rep.get("informational") else ("PASS" if rep["passed"] else "FAIL")
            print(f"[{tag}] {rep['theorem']}")
    return code


if __name__ == "__main__":
    sys.exit(main())
