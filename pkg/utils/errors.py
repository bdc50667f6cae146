# coding=utf-8


class QAccelError(ValueError):
    pass


class FormatMismatchError(QAccelError):
    def __init__(self, fmt_a, fmt_b):
        super().__init__(f'fixed-point operands use different formats: {fmt_a} vs {fmt_b}')
        self.fmt_a = fmt_a
        self.fmt_b = fmt_b


class LutConfigError(QAccelError):
    pass


class EnvironmentSpecError(QAccelError):
    pass


class ConfigError(QAccelError):
    pass


class AcceptanceError(QAccelError):
    def __init__(self, failures):
        super().__init__('acceptance check failed: ' + '; '.join(failures))
        self.failures = list(failures)
