"""T2 versus field for pure bath states and for a small ensemble.

Each pure state has its own clock field B = h_M / gamma_e, where T2 peaks.
Averaging over the states of the nearest nuclei spreads h_M and washes the
peak out. The ensemble here enumerates only 2^4 near states to stay fast.

    python demos/field_sweep.py
"""

import numpy as np

from cce_lab.cce import CceConfig, PulseSequence
from cce_lab.ensemble import EnsembleSpec, field_sweep, sample_bath_state
from cce_lab.geometry import generate_diamond_bath
from cce_lab.hamiltonians import overhauser_of_state
from cce_lab.models import NVModel

bath = generate_diamond_bath(5, radius=4.0, max_sites=200)
fields = np.round(np.arange(-20, 25) * 0.005, 10)
times = np.linspace(0, 3, 151)
cfg, seq = CceConfig(2, 1.0), PulseSequence.hahn()


def factory(B):
    return NVModel(B_gauss=B)


for k in range(3):
    M = sample_bath_state(bath, k)
    sw = field_sweep(bath, M, factory, seq, fields, times, cfg)
    b_ct = NVModel().clock_field(overhauser_of_state(bath, M))
    b, t2 = sw.peak()
    print(f"state {k}: clock field {b_ct:+.4f} G, T2 peak {t2:.3f} ms at {b:+.3f} G, FWHM {sw.fwhm():.4f} G")

ens = field_sweep(bath, EnsembleSpec(n_exact_avg=4), factory, seq, fields, times, cfg)
print(f"ensemble (2^4 near states): peak/median T2 = {ens.t2.max() / np.median(ens.t2):.2f}")
