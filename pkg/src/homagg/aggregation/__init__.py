"""Multi-worker aggregation: in-memory reducer, framed-TCP aggregator and worker client.

The aggregator (``server``) only merges; recovery lives on the worker side.
"""
