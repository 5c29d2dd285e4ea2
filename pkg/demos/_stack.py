"""Shared synthetic setup for the demos: one generative chain and its trained models."""

from lcmdiar import random_chain, synthesize_sessions, train_models


def build(frame_noise=1.0, seed=1):
    chain = random_chain(seed=seed, tv_scale=0.3, frame_noise=frame_noise)
    sessions = synthesize_sessions(chain, n_speakers=20, n_sessions=10, session_duration=8.0, seed=seed + 1)
    models = train_models([f for f, _ in sessions], [s for _, s in sessions],
                          n_components=32, rank=50, plda_rank=10, seed=seed + 2)
    return chain, models
