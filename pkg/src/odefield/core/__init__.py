# ABOUTME: Async services coordinating fits and experiments
# ABOUTME: Dispatches restart jobs to worker processes with anyio
