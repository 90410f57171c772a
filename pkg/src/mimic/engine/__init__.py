"""Live reenactment service: wire protocol, per-session pipeline, servers."""
