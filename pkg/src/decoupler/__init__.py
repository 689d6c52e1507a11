"""Row-by-row decoupling of LTI systems by static state feedback.

Exact-arithmetic library, HTTP service, and CLI for deciding decouplability
of (A, B, C) systems, synthesizing the feedback law, verifying it, and
analyzing pole assignability of the decoupled system.
"""

__version__ = "0.1.0"
