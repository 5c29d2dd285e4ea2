"""Effect of the data window (i-vector context) and the score window.

With noisy frames, per-segment i-vectors are unreliable; extracting them from
a context window recovers most of the accuracy, and smoothing the scores
over a window helps a little more.
"""

import numpy as np

from lcmdiar import ConversationSpec, DiarizationConfig, compute_der, diarize, synthesize_conversation

from _stack import build

chain, models = build(frame_noise=2.0)
spec = ConversationSpec(n_speakers=2, duration=60.0, mean_turn=10.0, min_turn=3.0)
conversations = [synthesize_conversation(spec, chain, seed=100 + k) for k in range(10)]

for name, dw, sw in (("no windows", 0, 0), ("data window", 20, 0), ("data + score", 20, 20)):
    for backend in ("plda", "svm"):
        cfg = DiarizationConfig(2, backend=backend, init="ahc-soft", data_half_window=dw, score_half_window=sw)
        ders = [compute_der(ref, diarize(f, None, models, cfg.with_(seed=k))[1], collar=0.0).der
                for k, (f, ref) in enumerate(conversations)]
        print(f"{name:>13} / {backend:<4}: mean DER {100 * np.mean(ders):5.2f}%")
