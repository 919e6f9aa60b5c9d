"""Regenerate the bundled hand description files.

Writes ``src/dualgrasp/assets/hand22.json`` (a simplified 22-joint five-finger
hand built from capsules: four fingers with abduction + three flexions, a
five-joint little finger with an extra metacarpal fold, a five-joint thumb,
wrist folded into the root pose) and ``src/dualgrasp/assets/pincer.json``
(a 2-joint toy used by tests).

The files are deterministic: fixed seed, fixed float rounding. Run from the
repository root::

    python3 tools/generate_hand_asset.py
"""

import json
import math
import os

import numpy as np

SEED = 20240917
SAMPLES_PER_HAND = 2000
ROUND = 6

# palmar side of every link frame (+z); biased sampling favors it
PALMAR = np.array([0.0, 0.0, 1.0])


def capsule_area(p0, p1, r):
    length = float(np.linalg.norm(np.asarray(p1) - np.asarray(p0)))
    return 2.0 * math.pi * r * length + 4.0 * math.pi * r * r


def sample_capsule(rng, p0, p1, r, count, bias=True):
    """Area-uniform capsule surface points, rejection-biased toward +z normals."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    axis = p1 - p0
    length = float(np.linalg.norm(axis))
    u = axis / length if length > 1e-12 else np.array([0.0, 0.0, 1.0])
    # orthonormal frame around u
    ref = np.array([1.0, 0.0, 0.0]) if abs(u[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(u, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(u, e1)
    a_cyl = 2.0 * math.pi * r * length
    a_sph = 4.0 * math.pi * r * r
    p_cyl = a_cyl / (a_cyl + a_sph)
    out = []
    while len(out) < count:
        if rng.random() < p_cyl:
            z = rng.random() * length
            phi = rng.random() * 2.0 * math.pi
            n = math.cos(phi) * e1 + math.sin(phi) * e2
            pt = p0 + z * u + r * n
        else:
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            center = p1 if float(n @ u) > 0.0 else p0
            pt = center + r * n
        if bias:
            accept = (1.0 + 2.0 * max(0.0, float(n @ PALMAR))) / 3.0
            if rng.random() > accept:
                continue
        out.append(pt)
    return np.asarray(out)


def rnd(x):
    if isinstance(x, (list, tuple, np.ndarray)):
        return [rnd(v) for v in np.asarray(x).tolist()]
    return round(float(x), ROUND)


class Builder:
    def __init__(self, name):
        self.name = name
        self.links = []
        self.joints = []
        self.palm = None
        self._index = {}

    def link(self, name, parent, origin, capsules, anchors, candidates=()):
        self._index[name] = len(self.links)
        self.links.append({
            "name": name,
            "parent": parent,
            "origin": rnd(origin),
            "capsules": [{"p0": rnd(p0), "p1": rnd(p1), "radius": rnd(r)}
                         for p0, p1, r in capsules],
            "surface_samples": [],      # filled by allocate_samples
            "penetration_anchors": [rnd(a) for a in anchors],
            "contact_candidates": [{"point": rnd(p), "normal": rnd(n)}
                                   for p, n in candidates],
        })
        return name

    def joint(self, name, link, axis, lower, upper):
        self.joints.append({"name": name, "link": link, "axis": rnd(axis),
                            "lower": rnd(lower), "upper": rnd(upper)})

    def allocate_samples(self, rng, total, tip_weight=2.0, tip_links=()):
        """Distribute ``total`` samples across links ∝ capsule area × weight."""
        weights = []
        for l in self.links:
            area = sum(capsule_area(c["p0"], c["p1"], c["radius"])
                       for c in l["capsules"])
            w = area * (tip_weight if l["name"] in tip_links else 1.0)
            weights.append(w)
        weights = np.asarray(weights)
        raw = weights / weights.sum() * total
        counts = np.floor(raw).astype(int)
        rema = raw - counts
        for i in np.argsort(-rema)[: total - counts.sum()]:
            counts[i] += 1
        for l, c in zip(self.links, counts):
            caps = l["capsules"]
            if not caps or c == 0:
                continue
            areas = np.asarray([capsule_area(k["p0"], k["p1"], k["radius"])
                                for k in caps])
            sub_raw = areas / areas.sum() * c
            sub = np.floor(sub_raw).astype(int)
            for i in np.argsort(-(sub_raw - sub))[: c - sub.sum()]:
                sub[i] += 1
            pts = [sample_capsule(rng, k["p0"], k["p1"], k["radius"], n)
                   for k, n in zip(caps, sub) if n > 0]
            l["surface_samples"] = rnd(np.vstack(pts)) if pts else []

    def spec(self):
        return {"format": "dualgrasp-hand-v1", "name": self.name,
                "links": self.links, "joints": self.joints, "palm": self.palm}


def build_hand22():
    b = Builder("hand22")
    z = np.array([0.0, 0.0, 1.0])
    x = np.array([1.0, 0.0, 0.0])
    y = np.array([0.0, 1.0, 0.0])

    # palm: three parallel capsules spanning the palm slab
    b.link("palm", None, (0, 0, 0),
           capsules=[((-0.025, -0.005, 0), (-0.025, 0.080, 0), 0.013),
                     ((0.0, -0.010, 0), (0.0, 0.085, 0), 0.013),
                     ((0.025, -0.005, 0), (0.025, 0.080, 0), 0.013)],
           anchors=[(-0.025, 0.0, 0), (-0.025, 0.04, 0), (-0.025, 0.075, 0),
                    (0.0, 0.0, 0), (0.0, 0.04, 0), (0.0, 0.080, 0),
                    (0.025, 0.0, 0), (0.025, 0.04, 0), (0.025, 0.075, 0)],
           candidates=[((-0.02, 0.030, 0.013), z), ((0.02, 0.030, 0.013), z),
                       ((-0.02, 0.060, 0.013), z), ((0.02, 0.060, 0.013), z)])
    b.palm = {"link": "palm", "center": rnd((0.0, 0.040, 0.013)),
              "normal": rnd(z)}

    def finger(prefix, base, lengths, meta=None):
        """Four-link chain: knuckle (abduction) + three flexion links."""
        parent = "palm"
        origin = base
        if meta is not None:
            meta_len, meta_range = meta
            name = b.link(f"{prefix}_meta", parent, origin,
                          capsules=[((0, 0, 0), (0, meta_len, 0), 0.010)],
                          anchors=[(0, 0, 0), (0, meta_len, 0)])
            b.joint(f"{prefix}_meta_flex", name, x, meta_range[0], meta_range[1])
            parent = name
            origin = (0, meta_len + 0.002, 0)
        lk, lp, lm, ld = lengths
        name = b.link(f"{prefix}_knuckle", parent, origin,
                      capsules=[((0, 0, 0), (0, lk, 0), 0.010)],
                      anchors=[(0, lk / 2, 0)])
        b.joint(f"{prefix}_abd", name, z, -0.30, 0.30)
        name = b.link(f"{prefix}_proximal", name, (0, lk, 0),
                      capsules=[((0, 0, 0), (0, lp, 0), 0.010)],
                      anchors=[(0, 0, 0), (0, lp / 2, 0), (0, lp, 0)])
        b.joint(f"{prefix}_mcp", name, x, -0.26, 1.571)
        name = b.link(f"{prefix}_middle", name, (0, lp + 0.005, 0),
                      capsules=[((0, 0, 0), (0, lm, 0), 0.009)],
                      anchors=[(0, 0, 0), (0, lm, 0)])
        b.joint(f"{prefix}_pip", name, x, 0.0, 1.571)
        r = 0.0085
        tip = (0, ld + r, 0)
        name = b.link(f"{prefix}_distal", name, (0, lm + 0.004, 0),
                      capsules=[((0, 0, 0), (0, ld, 0), r)],
                      anchors=[(0, 0, 0), (0, ld, 0)],
                      candidates=[(tip, y),
                                  ((0, 0.004, r), z),
                                  ((0, ld / 2, r), z),
                                  ((0, ld - 0.002, r), z),
                                  ((0, ld + 0.002, 0.006), (0, 0.707, 0.707))])
        b.joint(f"{prefix}_dip", name, x, 0.0, 1.571)
        return f"{prefix}_distal"

    tips = [finger("ff", (0.033, 0.092, 0), (0.012, 0.040, 0.024, 0.020)),
            finger("mf", (0.011, 0.092, 0), (0.012, 0.042, 0.026, 0.020)),
            finger("rf", (-0.011, 0.092, 0), (0.012, 0.040, 0.024, 0.020)),
            finger("lf", (-0.033, 0.070, 0), (0.010, 0.034, 0.020, 0.018),
                   meta=(0.020, (0.0, 0.70)))]

    # thumb: five links along +x, flexion about -y curls the pad (+z) inward
    name = b.link("th_base", "palm", (0.038, 0.005, 0),
                  capsules=[((0, 0, 0), (0.010, 0, 0), 0.011)],
                  anchors=[(0.005, 0, 0)])
    b.joint("th_swing", name, z, -0.35, 1.60)
    name = b.link("th_meta", name, (0.012, 0, 0),
                  capsules=[((0, 0, 0), (0.022, 0, 0), 0.011)],
                  anchors=[(0, 0, 0), (0.022, 0, 0)])
    b.joint("th_abd", name, x, -0.60, 0.60)
    name = b.link("th_proximal", name, (0.026, 0, 0),
                  capsules=[((0, 0, 0), (0.026, 0, 0), 0.0105)],
                  anchors=[(0, 0, 0), (0.013, 0, 0), (0.026, 0, 0)])
    b.joint("th_flex1", name, y, -1.40, 0.15)
    name = b.link("th_middle", name, (0.030, 0, 0),
                  capsules=[((0, 0, 0), (0.018, 0, 0), 0.0095)],
                  anchors=[(0, 0, 0), (0.018, 0, 0)])
    b.joint("th_flex2", name, y, -1.40, 0.10)
    r = 0.009
    name = b.link("th_distal", name, (0.022, 0, 0),
                  capsules=[((0, 0, 0), (0.018, 0, 0), r)],
                  anchors=[(0, 0, 0), (0.018, 0, 0)],
                  candidates=[(((0.018 + r), 0, 0), (1, 0, 0)),
                              ((0.004, 0, r), (0, 0, 1)),
                              ((0.010, 0, r), (0, 0, 1)),
                              ((0.016, 0, r), (0, 0, 1)),
                              ((0.020, 0, 0.006), (0.707, 0, 0.707))])
    b.joint("th_flex3", name, y, -1.40, 0.10)
    tips.append("th_distal")

    rng = np.random.default_rng(SEED)
    b.allocate_samples(rng, SAMPLES_PER_HAND, tip_weight=2.0, tip_links=tips)
    return b.spec()


def build_pincer():
    b = Builder("pincer")
    y = (0, 1, 0)
    b.link("base", None, (0, 0, 0),
           capsules=[((0, 0, 0), (0, 0.020, 0), 0.010)],
           anchors=[(0, 0.010, 0)])
    b.palm = {"link": "base", "center": rnd((0, 0.010, 0)), "normal": rnd(y)}
    for side, sx in (("a", 0.015), ("b", -0.015)):
        name = b.link(f"jaw_{side}", "base", (sx, 0.020, 0),
                      capsules=[((0, 0, 0), (0, 0.050, 0), 0.008)],
                      anchors=[(0, 0, 0), (0, 0.050, 0)],
                      candidates=[((0, 0.058, 0), y),
                                  ((-sx / abs(sx) * 0.008, 0.045, 0),
                                   (-sx / abs(sx), 0, 0))])
        b.joint(f"jaw_{side}_flex", name, (0, 0, 1), -0.80, 0.80)
    rng = np.random.default_rng(SEED + 1)
    b.allocate_samples(rng, 150)
    return b.spec()


def main():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    out_dir = os.path.join(root, "src", "dualgrasp", "assets")
    os.makedirs(out_dir, exist_ok=True)
    for fname, spec in (("hand22.json", build_hand22()),
                        ("pincer.json", build_pincer())):
        path = os.path.join(out_dir, fname)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(spec, fh, indent=1)
            fh.write("\n")
        n_joints = len(spec["joints"])
        n_samples = sum(len(l["surface_samples"]) for l in spec["links"])
        print(f"wrote {path}: {len(spec['links'])} links, {n_joints} joints, "
              f"{n_samples} samples")


if __name__ == "__main__":
    main()
