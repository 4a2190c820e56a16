"""Group decision-making engine.

Stakeholders elaborate proposals, evaluate them under an adopted decision
policy, and the engine aggregates individual decisions into collective
decisions through an explicit collaboration state machine with observer
notification, a durable event log, an HTTP/SSE service and a CLI.
"""

__version__ = "0.1.0"
