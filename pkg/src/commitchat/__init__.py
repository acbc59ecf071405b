"""Commitment-gated group chat: core state machine, event store, notification
rules, service layer, behavioral analytics, and a scripted-agent experiment
harness."""

__version__ = "0.1.0"
