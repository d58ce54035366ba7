#!/usr/bin/env python3
"""Stand-alone reference evaluator for BOP-style pose results.

Reads the same inputs as `fastpose eval` (ground-truth JSON, a directory of
obj_<id>.ply meshes and a result CSV) and prints the average recalls as
JSON. Depth for VSD comes from a per-pixel ray cast instead of a
rasterizer, and every other quantity is recomputed with numpy.

    ref_eval.py --gt gt.json --models models/ --results results.csv
"""

import argparse
import json
import math
import re
from pathlib import Path

import numpy as np

INF = math.inf


def read_ply(path):
    lines = Path(path).read_text().splitlines()
    n_vert = n_face = 0
    props = []
    i = 0
    current = None
    while True:
        tok = lines[i].split()
        i += 1
        if not tok:
            continue
        if tok[0] == "element":
            current = tok[1]
            if current == "vertex":
                n_vert = int(tok[2])
            elif current == "face":
                n_face = int(tok[2])
        elif tok[0] == "property" and current == "vertex":
            props.append(tok[-1])
        elif tok[0] == "end_header":
            break
    ix, iy, iz = props.index("x"), props.index("y"), props.index("z")
    verts = []
    for k in range(n_vert):
        vals = [float(v) for v in lines[i + k].split()]
        verts.append((vals[ix], vals[iy], vals[iz]))
    i += n_vert
    faces = []
    for k in range(n_face):
        vals = [int(v) for v in lines[i + k].split()]
        faces.append(vals[1:4])
    return np.array(verts, dtype=float), np.array(faces, dtype=int).reshape(-1, 3)


def read_results(path):
    rows = Path(path).read_text().splitlines()
    out = []
    for line in rows[1:]:
        if not line.strip():
            continue
        f = line.split(",")
        out.append({
            "key": (int(f[0]), int(f[1]), int(f[2])),
            "score": float(f[3]),
            "R": np.array([float(v) for v in f[4].split()]).reshape(3, 3),
            "t": np.array([float(v) for v in f[5].split()]),
        })
    return out


def transform(R, t, pts):
    # Left-to-right sums, matching a plain double loop.
    return np.stack([R[i, 0] * pts[:, 0] + R[i, 1] * pts[:, 1] + R[i, 2] * pts[:, 2] + t[i] for i in range(3)], axis=1)


def dist(a, b):
    d = a - b
    return np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2])


def diameter(verts):
    best = 0.0
    for v in verts:
        best = max(best, float(dist(verts, v[None, :]).max()))
    return best


def project(K, pts):
    return np.stack([K["fx"] * pts[:, 0] / pts[:, 2] + K["cx"], K["fy"] * pts[:, 1] / pts[:, 2] + K["cy"]], axis=1)


def raycast(verts, faces, R, t, K):
    cam = transform(R, t, verts)
    w, h = K["w"], K["h"]
    u, v = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    d = np.stack([(u - K["cx"]) / K["fx"], (v - K["cy"]) / K["fy"], np.ones_like(u)], axis=-1).reshape(-1, 3)
    depth = np.full(d.shape[0], INF)
    for a_i, b_i, c_i in faces:
        a, b, c = cam[a_i], cam[b_i], cam[c_i]
        e1, e2 = b - a, c - a
        q = np.cross(d, e2)
        det = q @ e1
        ok = np.abs(det) > 1e-14
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        s = -a
        bu = (q @ s) * inv
        r = np.cross(s, e1)
        bv = (d @ r) * inv
        tt = (r @ e2) * inv
        hit = ok & (bu >= 0) & (bu <= 1) & (bv >= 0) & (bu + bv <= 1) & (tt >= 1.0)
        depth = np.where(hit, np.minimum(depth, tt), depth)
    return np.where(np.isfinite(depth), depth, 0.0)


def vsd(de, dg, taus):
    ve, vg = de > 0, dg > 0
    union = ve | vg
    n = int(union.sum())
    if n == 0:
        return [0.0] * len(taus)
    both = ve & vg
    diff = np.abs(de - dg)
    return [(n - int((both & (diff < tau)).sum())) / n for tau in taus]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--gt", required=True)
    ap.add_argument("--models", required=True)
    ap.add_argument("--results", required=True)
    args = ap.parse_args()

    gt = json.loads(Path(args.gt).read_text())
    models = {}
    for p in sorted(Path(args.models).iterdir()):
        m = re.fullmatch(r"obj_0*([0-9]+)\.ply", p.name)
        if m:
            models[int(m.group(1))] = read_ply(p)

    meta = {int(k): v for k, v in gt.get("objects", {}).items()}
    syms, symmetric, diam = {}, {}, {}
    for oid, (verts, _) in models.items():
        info = meta.get(oid, {})
        syms[oid] = [(np.eye(3), np.zeros(3))] + [
            (np.array(s).reshape(3, 4)[:, :3], np.array(s).reshape(3, 4)[:, 3]) for s in info.get("symmetries", [])
        ]
        symmetric[oid] = bool(info.get("symmetric", False))
        diam[oid] = float(info["diameter"]) if "diameter" in info else diameter(verts)

    inst = []
    for rec in gt["instances"]:
        K = rec["cam_K"]
        inst.append({
            "key": (rec["scene_id"], rec["im_id"], rec["obj_id"]),
            "R": np.array(rec["cam_R_m2c"], dtype=float).reshape(3, 3),
            "t": np.array(rec["cam_t_m2c"], dtype=float),
            "K": {"fx": K[0], "fy": K[4], "cx": K[2], "cy": K[5], "w": rec["im_size"][0], "h": rec["im_size"][1]},
        })
    width = inst[0]["K"]["w"]
    r = width / 640.0
    fracs = [(5.0 * k) / 100.0 for k in range(1, 11)]
    mspd_th = [5.0 * k for k in range(1, 11)]
    add_th = [0.02, 0.05, 0.10]

    # Matching: estimates by descending score (file order on ties); each takes
    # the nearest unmatched GT translation, lower index on ties.
    estimates = read_results(args.results)
    groups = {}
    for i, g in enumerate(inst):
        groups.setdefault(g["key"], []).append(i)
    assigned = {}
    order = sorted(range(len(estimates)), key=lambda i: -estimates[i]["score"])
    for i in order:
        e = estimates[i]
        free = [g for g in groups.get(e["key"], []) if g not in assigned]
        if not free:
            continue
        best = min(free, key=lambda g: (float(np.linalg.norm(e["t"] - inst[g]["t"])), g))
        assigned[best] = e

    errors = {}
    for gi, g in enumerate(inst):
        oid = g["key"][2]
        verts, faces = models[oid]
        d = diam[oid]
        e = assigned.get(gi)
        if e is None:
            err = {"vsd": [INF] * 10, "mssd": INF, "mspd": INF, "add": INF}
        else:
            est_pts = transform(e["R"], e["t"], verts)
            mssd = mspd = INF
            est_px = project(g["K"], est_pts) if (est_pts[:, 2] > 0).all() else None
            for S_R, S_t in syms[oid]:
                gt_pts = transform(g["R"], g["t"], transform(S_R, S_t, verts))
                mssd = min(mssd, float(dist(est_pts, gt_pts).max()))
                if est_px is not None:
                    dp = est_px - project(g["K"], gt_pts)
                    mspd = min(mspd, float(np.sqrt(dp[:, 0] * dp[:, 0] + dp[:, 1] * dp[:, 1]).max()))
            gt_pts = transform(g["R"], g["t"], verts)
            if symmetric[oid]:
                add = float(np.mean([dist(gt_pts, p[None, :]).min() for p in est_pts]))
            else:
                add = float(dist(est_pts, gt_pts).mean())
            de = raycast(verts, faces, e["R"], e["t"], g["K"])
            dg = raycast(verts, faces, g["R"], g["t"], g["K"])
            err = {"vsd": vsd(de, dg, [f * d for f in fracs]), "mssd": mssd, "mspd": mspd, "add": add}
        errors.setdefault(oid, []).append(err)

    def recall(vals, th):
        return sum(1 for v in vals if v < th) / len(vals)

    per = {"vsd": [], "mssd": [], "mspd": [], "add": []}
    for oid in sorted(errors):
        errs, d = errors[oid], diam[oid]
        per["vsd"].append(np.mean([recall([x["vsd"][ti] for x in errs], c) for ti in range(10) for c in fracs]))
        per["mssd"].append(np.mean([recall([x["mssd"] for x in errs], f * d) for f in fracs]))
        per["mspd"].append(np.mean([recall([x["mspd"] for x in errs], t * r) for t in mspd_th]))
        per["add"].append(np.mean([recall([x["add"] for x in errs], f * d) for f in add_th]))
    out = {f"ar_{k}": float(np.mean(v)) for k, v in per.items()}
    out["ar_bop"] = (out["ar_vsd"] + out["ar_mssd"] + out["ar_mspd"]) / 3.0
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
