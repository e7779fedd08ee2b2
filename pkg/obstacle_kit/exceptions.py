"""
Hierarquia de erros do obstacle_kit.

ValidationError sinaliza dados de entrada inconsistentes (código de saída 3 na CLI);
SolverError sinaliza falha numérica de um solver (código de saída 2).
"""
from typing import Any, Dict


class ObstacleKitError(Exception):
    """Erro base com detalhes serializáveis"""

    exit_code = 1

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        """Corpo JSON do erro"""
        return {
            'error': type(self).__name__,
            'message': self.message,
            'details': self.details,
        }


class ValidationError(ObstacleKitError):
    exit_code = 3


class SolverError(ObstacleKitError):
    exit_code = 2


# --- validação ---

class ConfigError(ValidationError):
    pass


class CoefficientViolation(ValidationError):
    pass


class NonFinite(ValidationError):
    pass


class AtomOutOfDomain(ValidationError):
    pass


class StepSizeViolation(ValidationError):
    pass


class TerminalIncompatible(ValidationError):
    pass


class RegimeViolation(ValidationError):
    pass


class CoefficientRoughness(ValidationError):
    pass


class BoundsInverted(ValidationError):
    pass


class DegenerateForm(ValidationError):
    pass


class SeparationFail(ValidationError):
    pass


class NoSandwich(ValidationError):
    pass


# --- solvers ---

class NewtonDivergence(SolverError):
    pass


class LcpStall(SolverError):
    pass


class NoConvergence(SolverError):
    pass


class RegressionSingular(SolverError):
    pass
