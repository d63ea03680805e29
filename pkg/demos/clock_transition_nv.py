"""NV centre at the clock transition: modified CCE against the exact solver.

A ten-nucleus 13C bath is put in the product state whose Overhauser field
is closest to zero, so the external field B = 0 sits on the clock
transition. The Hahn echo is computed with CCE-1, CCE-2, the original
(second-order expanded) CCE-2 and the exact product-space solver.

    python demos/clock_transition_nv.py [outdir]
"""

import sys
from pathlib import Path

import numpy as np

from cce_lab.cce import CceConfig, NearZeroDivisorError, PulseSequence, cce_coherence
from cce_lab.ensemble import extract_t2, near_zero_state
from cce_lab.exact import exact_coherence
from cce_lab.geometry import generate_diamond_bath
from cce_lab.hamiltonians import overhauser_of_state
from cce_lab.models import NVModel
from cce_lab.plotting import svg_line_plot

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

bath = generate_diamond_bath(1).nearest(10)
M = near_zero_state(bath, 1)
print(f"{len(bath)} nuclei, h_M = {overhauser_of_state(bath, M):+.3f} kHz")

t = np.linspace(0, 2, 101)
seq = PulseSequence.hahn()
for B in (0.0, 0.1):
    model = NVModel(B_gauss=B)
    exact = exact_coherence(bath, M, model, seq, t)
    c2, orders = cce_coherence(bath, M, model, seq, CceConfig(2), t, return_orders=True)
    t2 = extract_t2(exact)
    print(f"\nB = {B} G, exact T2 {'=' if t2.decayed else '>'} {t2.t2:.3f} ms")
    print(f"  CCE-1 max dev {np.abs(orders[1] - exact.values).max():.4f}")
    print(f"  CCE-2 max dev {np.abs(c2.values - exact.values).max():.4f}")
    series = [("exact", t, np.abs(exact.values)), ("CCE-1", t, np.abs(orders[1])), ("CCE-2", t, np.abs(c2.values))]
    try:
        orig = cce_coherence(bath, M, model, seq, CceConfig(2, mode="original"), t)
        print(f"  original CCE-2 max dev {np.abs(orig.values - exact.values).max():.4f}")
        series.append(("original CCE-2", t, np.clip(np.abs(orig.values), 0, 2)))
    except NearZeroDivisorError as exc:
        print(f"  original CCE-2 broke down: {exc}")
    svg = svg_line_plot(series, "total time (ms)", "|L|", f"Hahn echo, B = {B} G")
    (out / f"clock_transition_B{B}.svg").write_text(svg)
print(f"\nplots in {out}/")
