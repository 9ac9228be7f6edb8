"""Gmsh MSH 2.2 ASCII reading and writing.

The reader accepts linear meshes (3-node triangles plus 2-node boundary
lines) and re-associates boundary edges with the domain's curve segments by
closest-point projection.  Writers emit triangle meshes (orders 1..3, with
geometry re-interpolated to the equidistant nodes gmsh expects) and linear
quad meshes.
"""

from __future__ import annotations

import numpy as np

from .errors import MeshError
from .trimesh import BoundaryFace, TriMesh

GMSH_LINE = 1
GMSH_TRI = 2
GMSH_QUAD = 3
GMSH_TRI6 = 9
GMSH_TRI10 = 21

_TRI_TYPE_BY_ORDER = {1: GMSH_TRI, 2: GMSH_TRI6, 3: GMSH_TRI10}


def _equidistant_tri_nodes(order):
    """Gmsh node ordering: vertices, then edges in order, then interior."""
    v = [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)]
    nodes = list(v)
    for e in range(3):
        a = np.array(v[e])
        b = np.array(v[(e + 1) % 3])
        for k in range(1, order):
            nodes.append(tuple(a + (b - a) * k / order))
    if order == 3:
        nodes.append((-1.0 / 3.0, -1.0 / 3.0))
    return np.array(nodes)


def write_msh(path, mesh):
    """Write a TriMesh (order <= 3 high-order, else subsampled linear)."""
    order = mesh.order if mesh.order in _TRI_TYPE_BY_ORDER else 1
    etype = _TRI_TYPE_BY_ORDER[order]
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat"]

    if order == 1:
        points = [tuple(p) for p in mesh.vertices]
        conn = [[int(v) for v in t] for t in mesh.triangles]
    else:
        ref_nodes = _equidistant_tri_nodes(order)
        basis = mesh.ref.basis_at(ref_nodes)
        points = []
        index = {}
        conn = []
        for e in range(mesh.n_elements()):
            xy = basis @ mesh.geom[e]
            ids = []
            for p in xy:
                key = (round(p[0], 12), round(p[1], 12))
                if key not in index:
                    index[key] = len(points)
                    points.append((p[0], p[1]))
                ids.append(index[key])
            conn.append(ids)

    lines.append("$Nodes")
    lines.append(str(len(points)))
    for i, (x, y) in enumerate(points):
        lines.append(f"{i + 1} {float(x)!r} {float(y)!r} 0")
    lines.append("$EndNodes")
    lines.append("$Elements")

    bnd = []
    if order == 1:
        for f in mesh.boundary_faces:
            a = int(mesh.triangles[f.elem][f.ledge])
            b = int(mesh.triangles[f.elem][(f.ledge + 1) % 3])
            bnd.append((a, b, f.loop + 1))
    lines.append(str(len(conn) + len(bnd)))
    eid = 1
    for (a, b, tag) in bnd:
        lines.append(f"{eid} {GMSH_LINE} 2 {tag} {tag} {a + 1} {b + 1}")
        eid += 1
    for ids in conn:
        nodes = " ".join(str(i + 1) for i in ids)
        lines.append(f"{eid} {etype} 2 0 1 {nodes}")
        eid += 1
    lines.append("$EndElements")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_quad_msh(path, qmesh):
    """Linear quads; block provenance as the physical tag."""
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes",
             str(qmesh.n_nodes())]
    for i, (x, y) in enumerate(qmesh.nodes):
        lines.append(f"{i + 1} {float(x)!r} {float(y)!r} 0")
    lines.append("$EndNodes")
    lines.append("$Elements")
    lines.append(str(len(qmesh.quads)))
    for qi, q in enumerate(qmesh.quads):
        tag = int(qmesh.block_of[qi])
        nodes = " ".join(str(int(v) + 1) for v in q)
        lines.append(f"{qi + 1} {GMSH_QUAD} 2 {tag} {tag} {nodes}")
    lines.append("$EndElements")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_msh(path):
    """Parse nodes, triangles, and tagged boundary lines from MSH 2.2 ASCII."""
    with open(path) as f:
        tokens = f.read().split("\n")
    try:
        i = tokens.index("$MeshFormat")
        version = tokens[i + 1].split()[0]
    except (ValueError, IndexError):
        raise MeshError(f"{path}: not a MSH file")
    if not version.startswith("2.2"):
        raise MeshError(f"{path}: unsupported MSH version {version}")

    def section(name):
        start = tokens.index(f"${name}")
        end = tokens.index(f"$End{name}")
        return tokens[start + 1:end]

    node_lines = section("Nodes")
    n_nodes = int(node_lines[0])
    coords = np.zeros((n_nodes, 2))
    ids = {}
    for row in node_lines[1:n_nodes + 1]:
        parts = row.split()
        ids[int(parts[0])] = len(ids)
        coords[ids[int(parts[0])]] = [float(parts[1]), float(parts[2])]

    elem_lines = section("Elements")
    n_elem = int(elem_lines[0])
    tris = []
    blines = []
    for row in elem_lines[1:n_elem + 1]:
        parts = [int(p) for p in row.split()]
        etype = parts[1]
        ntags = parts[2]
        nodes = parts[3 + ntags:]
        if etype == GMSH_TRI:
            tris.append([ids[n] for n in nodes])
        elif etype == GMSH_LINE:
            tag = parts[3] if ntags else 0
            blines.append(([ids[n] for n in nodes], tag))
        else:
            raise MeshError(f"{path}: unsupported element type {etype}; "
                            "only 3-node triangles and 2-node lines accepted")
    if not tris:
        raise MeshError(f"{path}: no triangles found")
    return coords, np.array(tris, dtype=int), blines


def import_msh(path, domain):
    """Linear TriMesh from file, boundary edges re-bound to domain segments."""
    coords, tris, blines = read_msh(path)
    tol = 1e-6 * domain.bbox_diag()

    # orient triangles counterclockwise
    fixed = []
    for t in tris:
        a, b, c = coords[t[0]], coords[t[1]], coords[t[2]]
        if (b - a)[0] * (c - a)[1] - (b - a)[1] * (c - a)[0] < 0:
            fixed.append([t[0], t[2], t[1]])
        else:
            fixed.append(list(t))
    tris = np.array(fixed, dtype=int)

    directed = {}
    for ei, (a, b, c) in enumerate(tris):
        for le, (u, v) in enumerate(((a, b), (b, c), (c, a))):
            directed[(int(u), int(v))] = (ei, le)

    # boundary edges: either the tagged lines or all once-used edges
    edge_pairs = []
    if blines:
        for (nodes, _tag) in blines:
            edge_pairs.append((nodes[0], nodes[1]))
    else:
        count = {}
        for (u, v) in directed:
            count[frozenset((u, v))] = count.get(frozenset((u, v)), 0) + 1
        for key, n in count.items():
            if n == 1:
                edge_pairs.append(tuple(sorted(key)))

    faces = []
    for (u, v) in edge_pairs:
        if (u, v) in directed:
            a, b = u, v
        elif (v, u) in directed:
            a, b = v, u
        else:
            raise MeshError("boundary line does not match any triangle edge")
        pa, pb = coords[a], coords[b]
        la, sa, ta, da = domain.closest_boundary_point(pa)
        lb, sb, tb, db = domain.closest_boundary_point(pb)
        if da > tol or db > tol:
            raise MeshError(
                f"mesh/geometry mismatch: boundary vertex {max(da, db):.2e} "
                "away from every segment")
        if (la, sa) != (lb, sb):
            # junction edge: one endpoint is the shared corner, so exactly one
            # of the two segments hosts both endpoints
            seg_b = domain.loops[lb].segments[sb]
            ta_on_b, da_on_b = seg_b.closest_point(pa)
            seg_a = domain.loops[la].segments[sa]
            tb_on_a, db_on_a = seg_a.closest_point(pb)
            if da_on_b <= tol:
                la, sa, ta, tb = lb, sb, ta_on_b, tb
            elif db_on_a <= tol:
                tb = tb_on_a
            else:
                raise MeshError("mesh/geometry mismatch at a segment junction")
        ei, le = directed[(a, b)]
        faces.append(BoundaryFace(ei, le, la, sa, float(ta), float(tb)))

    geom = coords[tris]
    mesh = TriMesh(coords, tris, 1, geom, faces, domain=domain)
    mesh.validate_jacobians()
    return mesh
