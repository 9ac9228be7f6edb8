"""Batch pipeline driver: mesh -> solve -> topology -> trace -> cut -> split.

Every stage persists its artifact as deterministic JSON (or MSH) in the
output directory, so stages can be re-run individually and byte-identical
reruns certify reproducibility.  There is no randomness anywhere in the
pipeline.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import blockdecomp, quadblocks, singular, svgio, tracer, vtkio
from .errors import ConfigError, QuadfieldError
from .field import FieldProbe
from .geometry import load_domain
from .msh import write_msh, write_quad_msh
from .solver import (DEFAULT_PENALTY, DiscretizationChoice, FieldSolution,
                     choose_discretization, solve_guiding_field)
from .trimesh import TriMesh, elevate_and_curve, generate_background_mesh

DEFAULTS = {
    "order": 3,
    "scheme": "auto",            # auto | cg | dg
    "target_h": 0.0,             # 0 => bbox diagonal / 6
    "step_factor": 0.25,
    "merge_mode": "normal",      # normal | aggressive
    "kappa": 5.0,
    "split": 2,
    "penalty": DEFAULT_PENALTY,
    "n_max": 100000,
    "length_factor": 60.0,
    "threads": 1,
    "formats": "",               # comma list: vtk,svg,msh
    "out": "out",
}

STAGES = ("mesh", "solve", "topology", "trace", "cut", "split")
ARTIFACTS = {
    "mesh": "mesh.json",
    "solve": "field.json",
    "topology": "topology.json",
    "trace": "separatrices.json",
    "cut": "blocks.json",
    "split": "quadmesh.msh",
}


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def dump_json(path, doc):
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True, default=_json_default)
        f.write("\n")


def load_json(path):
    if not Path(path).exists():
        raise ConfigError(f"missing upstream artifact {path}")
    with open(path) as f:
        return json.load(f)


class Pipeline:
    def __init__(self, domain_path, config):
        self.config = config
        self.domain_path = Path(domain_path)
        self.domain = load_domain(domain_path)
        self.out = Path(config["out"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.formats = [f for f in config["formats"].split(",") if f]

    # ---- artifact paths ----------------------------------------------------

    def path(self, stage):
        return self.out / ARTIFACTS[stage]

    # ---- stages --------------------------------------------------------------

    def stage_mesh(self):
        h = self.config["target_h"] or self.domain.bbox_diag() / 6.0
        linear = generate_background_mesh(self.domain, h)
        mesh = elevate_and_curve(linear, self.config["order"], self.domain)
        doc = mesh.to_json()
        doc["target_h"] = h
        dump_json(self.path("mesh"), doc)
        if "msh" in self.formats:
            write_msh(self.out / "trimesh.msh", mesh)
        if "vtk" in self.formats:
            vtkio.write_vtk_trimesh(self.out / "trimesh.vtk", mesh)
        return mesh

    def load_mesh(self):
        return TriMesh.from_json(load_json(self.path("mesh")), domain=self.domain)

    def _choice(self):
        auto = choose_discretization(self.domain, order=self.config["order"],
                                     penalty=self.config["penalty"])
        scheme = self.config["scheme"]
        if scheme == "auto":
            return auto
        if scheme == "cg" and auto.scheme == "dg":
            raise ConfigError("CG requires continuous BCs: this domain has "
                              "corners with discontinuous boundary data")
        return DiscretizationChoice(scheme, self.config["order"],
                                    self.config["penalty"])

    def stage_solve(self):
        mesh = self.load_mesh()
        choice = self._choice()
        sol = solve_guiding_field(mesh, self.domain, choice)
        dump_json(self.path("solve"), sol.to_json())
        if "vtk" in self.formats:
            vtkio.write_vtk_fields(self.out / "fields.vtk", sol)
        return sol

    def load_solution(self, mesh=None):
        mesh = mesh or self.load_mesh()
        return FieldSolution.from_json(load_json(self.path("solve")), mesh)

    def stage_topology(self):
        sol = self.load_solution()
        probe = FieldProbe(sol)
        cps = singular.find_critical_points(sol, probe)
        cns = singular.corner_valences(self.domain, probe)
        dump_json(self.path("topology"), singular.topology_report(cps, cns))
        return cps, cns

    def load_topology(self, probe):
        doc = load_json(self.path("topology"))
        cps = []
        for c in doc["critical_points"]:
            cps.append(singular.CriticalPoint(
                position=np.array(c["position"]), elem=int(c["element"]),
                xi=np.zeros(2), vmag=float(c["vmag"]), index=int(c["index"]),
                valence=int(c["valence"]), radius=float(c["radius"])))
        corners = self.domain.corner_inventory()
        cns = []
        for i, c in enumerate(doc["corners"]):
            cns.append(singular.CornerNode(
                corner=corners[i], corner_id=i, index=float(c["index"]),
                valence=int(c["valence"]), dpsi=float(c["dpsi"]),
                residual=float(c["residual"]),
                radius=float(c.get("radius", 0.0)) or 0.1 * self.domain.bbox_diag()))
        return cps, cns

    def _step_size(self, mesh):
        return self.config["step_factor"] * mesh.shortest_edge()

    def stage_trace(self):
        mesh = self.load_mesh()
        sol = self.load_solution(mesh)
        probe = FieldProbe(sol)
        cps, cns = self.load_topology(probe)
        h_s = self._step_size(mesh)
        seps, _ = tracer.trace_all(
            cps, cns, probe, self.domain, h_s, mode=self.config["merge_mode"],
            kappa=self.config["kappa"], n_max=self.config["n_max"],
            length_factor=self.config["length_factor"])
        dump_json(self.path("trace"), tracer.separatrices_to_json(seps))
        if "svg" in self.formats:
            svgio.write_svg_streamlines(self.out / "streamlines.svg", sol, seps, cps)
        return seps

    def load_separatrices(self):
        doc = load_json(self.path("trace"))
        seps = []
        for rec in doc:
            def anchor(d):
                return tracer.Anchor(d["kind"], d["ident"],
                                     np.array(d["position"]), loop=d["loop"],
                                     seg=d["seg"], t=d["t"])
            seps.append(tracer.Separatrix(points=np.array(rec["points"]),
                                          start=anchor(rec["start"]),
                                          end=anchor(rec["end"])))
        return seps

    def stage_cut(self):
        mesh = self.load_mesh()
        sol = self.load_solution(mesh)
        probe = FieldProbe(sol)
        cps, cns = self.load_topology(probe)
        seps = self.load_separatrices()
        h_s = self._step_size(mesh)
        sub, faces = blockdecomp.decompose(self.domain, probe, cns, seps, h_s,
                                           critical_points=cps)
        blocks = quadblocks.build_blocks(sub, faces)
        doc = {"blocks": [{
            "corners": [list(k) for k in b.corner_keys],
            "sides": [s.points.tolist() for s in b.sides],
            "side_records": [[int(r), int(d)] for (r, d) in b.side_records],
        } for b in blocks]}
        dump_json(self.path("cut"), doc)
        if "svg" in self.formats:
            irregular = [k for k in sub.vertices
                         if k[0] in ("critical", "artificial")]
            svgio.write_svg_blocks(self.out / "blocks.svg", sub, faces, irregular)
        return blocks

    def load_blocks(self):
        doc = load_json(self.path("cut"))
        blocks = []
        for bi, rec in enumerate(doc["blocks"]):
            sides = [quadblocks.SidePath(np.array(p)) for p in rec["sides"]]
            keys = [tuple(k) for k in rec["corners"]]
            srecs = [tuple(sr) for sr in rec["side_records"]]
            blocks.append(quadblocks.QuadBlock(bi, keys, sides, srecs))
        return blocks

    def stage_split(self):
        blocks = self.load_blocks()
        qmesh = quadblocks.isoparametric_split(
            blocks, self.config["split"], order=self.config["order"],
            holes=len(self.domain.holes))
        write_quad_msh(self.path("split"), qmesh)
        if "vtk" in self.formats:
            vtkio.write_vtk_quadmesh(self.out / "quadmesh.vtk", qmesh)
        return qmesh

    def run(self, stage):
        return getattr(self, f"stage_{stage}")()

    def run_all(self):
        for stage in STAGES:
            try:
                self.run(stage)
            except QuadfieldError as ex:
                raise type(ex)(f"stage {stage}: {ex}") from ex
        self.write_manifest()

    def write_manifest(self):
        artifacts = {}
        for stage in STAGES:
            p = self.path(stage)
            digest = hashlib.sha256(p.read_bytes()).hexdigest()
            artifacts[p.name] = digest
        dump_json(self.out / "manifest.json", {"artifacts": artifacts})


def build_parser():
    parser = argparse.ArgumentParser(
        prog="quadfield",
        description="Curved quadrilateral block decomposition of 2D domains")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in ("run",) + STAGES:
        p = sub.add_parser(cmd)
        p.add_argument("domain", help="domain JSON file")
        p.add_argument("--config", help="config JSON file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--order", type=int)
        p.add_argument("--scheme", choices=("auto", "cg", "dg"))
        p.add_argument("--target-h", dest="target_h", type=float)
        p.add_argument("--step-factor", dest="step_factor", type=float)
        p.add_argument("--merge", dest="merge_mode",
                       choices=("normal", "aggressive"))
        p.add_argument("--kappa", type=float)
        p.add_argument("--split", type=int)
        p.add_argument("--penalty", type=float)
        p.add_argument("--n-max", dest="n_max", type=int)
        p.add_argument("--length-factor", dest="length_factor", type=float)
        p.add_argument("--threads", type=int)
        p.add_argument("--formats", help="comma list of extra outputs: vtk,svg,msh")
        p.add_argument("--resume", action="store_true",
                       help="stage commands always resume from --out artifacts")
    return parser


def resolve_config(args):
    config = dict(DEFAULTS)
    if args.config:
        doc = load_json(args.config)
        unknown = set(doc) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        config.update(doc)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            config[key] = val
    if config["order"] < 1:
        raise ConfigError("order must be >= 1")
    if config["split"] < 1:
        raise ConfigError("split must be >= 1")
    if config["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    if config["kappa"] <= 0 or config["step_factor"] <= 0:
        raise ConfigError("kappa and step_factor must be positive")
    return config


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        pipe = Pipeline(args.domain, config)
        if args.command == "run":
            pipe.run_all()
        else:
            pipe.run(args.command)
    except QuadfieldError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return getattr(ex, "exit_code", 1)
    except OSError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
