"""Exception types raised by the pipeline.

Every error carries a short machine-readable ``code`` which the CLI writes
into per-image reports.
"""


class PipelineError(Exception):
    code = "pipeline-error"

    def __init__(self, message=None):
        super().__init__(message or self.code)


class ChannelMismatch(PipelineError, ValueError):
    code = "channel-mismatch"


class NoForeground(PipelineError):
    code = "no-foreground"


class WedgeNotFound(PipelineError):
    code = "wedge-not-found"


class DegenerateIntersection(PipelineError):
    code = "degenerate-intersection"


class AtApex(PipelineError, ValueError):
    code = "at-apex"


class AnnotationMismatch(PipelineError, ValueError):
    code = "annotation-mismatch"

    def __init__(self, offenders):
        self.offenders = list(offenders)
        super().__init__("annotation-mismatch: " + "; ".join(self.offenders))


class DomainError(PipelineError, ValueError):
    code = "domain"


class KinkError(PipelineError, ValueError):
    code = "kink"


class NoBoundary(PipelineError, ValueError):
    code = "no-boundary"


class NoSeeds(PipelineError):
    code = "no-seeds"


class AxisNotFound(PipelineError):
    code = "axis-not-found"


class EmptyWaveform(PipelineError):
    code = "empty-waveform"


class NoGroundTruth(PipelineError, ValueError):
    code = "no-ground-truth"


class NoMatches(PipelineError):
    code = "no-matches"


class OffCanvas(PipelineError, ValueError):
    code = "off-canvas"


class Clipped(PipelineError, ValueError):
    code = "clipped"


class SolverDidNotConverge(PipelineError, RuntimeError):
    code = "solver-not-converged"
