"""Domain errors shared by every app.

Each error carries a stable ``code`` so the CLI can render it in the same
``{"error": ..., "code": ...}`` shape regardless of where it was raised.
"""


class PRMPPIError(Exception):
    """Root of all errors raised by the benchmark code."""

    code = 'error'

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


class ContractViolation(PRMPPIError, ValueError):
    """A caller broke a precondition: wrong dimension, bad range, ..."""

    code = 'contract_violation'


class ConfigurationError(PRMPPIError, ValueError):
    """Unknown names or invalid values in a run configuration."""

    code = 'configuration_error'


class IntegrationBlowup(PRMPPIError, ArithmeticError):
    """Integration produced a non-finite state."""

    code = 'integration_blowup'

    def __init__(self, message, state=None, index=None):
        super().__init__(message, state=state, index=index)
        self.state = state
        self.index = index

    def tagged(self, index):
        """Return a copy carrying the (m, p, k) rollout index."""
        return IntegrationBlowup(f'{self} at rollout index {index}', state=self.state, index=index)


class NumericError(PRMPPIError, ArithmeticError):
    """A gradient or density evaluation became non-finite."""

    code = 'numeric_error'

    def __init__(self, message, theta=None):
        super().__init__(message, theta=theta)
        self.theta = theta


class EstimatorDivergence(PRMPPIError):
    """A Gaussian estimator lost positive definiteness beyond repair."""

    code = 'estimator_divergence'


class InsufficientSamples(PRMPPIError, ValueError):
    """The conformal rank exceeds the number of samples."""

    code = 'insufficient_samples'

    def __init__(self, samples, delta, rank, minimum):
        super().__init__(
            f'P = {samples} samples cannot certify delta = {delta}: the conformal rank '
            f'r = {rank} exceeds P. At least P >= ceil((1 - delta) / delta) = {minimum} '
            f'samples are required for a finite quantile.',
            samples=samples, delta=delta, rank=rank, minimum=minimum,
        )
        self.samples = samples
        self.delta = delta
        self.rank = rank
        self.minimum = minimum


class DegenerateBatch(PRMPPIError):
    """Every rollout cost in a batch is infinite."""

    code = 'degenerate_batch'
