"""Lay out three small scenes from text and report how physical they ended up.

Run: python3 demos/three_cases.py
"""
import warnings

import numpy as np

from gslayout.energy import assemble
from gslayout.optimizer import ScheduleConfig, optimize
from gslayout.pipeline import scene_from_prompt, supported_heights
from gslayout.pools import load_pools

PROMPTS = [
    "a lamp on a table, with a bed beside the table",
    "a clock hangs on a moldy cabinet",
    "a bicycle leans against a table",
]


def main():
    pools = load_pools()
    for prompt in PROMPTS:
        scene, _ = scene_from_prompt(prompt, pools, points=1000)
        before = assemble(scene)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = optimize(scene, ScheduleConfig(T=300), trace=False)
        print(prompt)
        print(f"  E_p {before.E_p:.4f} -> {res.final.E_p:.4f}, phase switch at step {res.x}")
        for lab, h in supported_heights(scene, res.poses).items():
            print(f"  {lab:<12} gap above support {h:+.4f} m, tilt {res.poses[lab].angle:.3f} rad")
        for (i, j), (a, b) in scene.anchors.items():
            la, lb = scene.label(i), scene.label(j)
            d = np.linalg.norm(res.poses[la].apply(a) - res.poses[lb].apply(b))
            print(f"  anchor {la}-{lb}: {d:.4f} m (rest {scene.hyper.d_anchor} m)")


if __name__ == "__main__":
    main()
