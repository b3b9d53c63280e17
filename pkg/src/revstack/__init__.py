"""Learning to lead Stackelberg games from revealed preferences.

The leader posts prices (or tolls, or contract rates), sees only the
follower's response, and composes a dual induction loop with a zeroth-order
optimiser over follower actions.
"""

from .errors import (ConfigError, ContractViolation, DomainError, ModelError, NotHomogeneousError,
                     NumericalError, RevstackError, SolverError, UnsupportedError, UsageError)
from .follower import Approximate, Exact, FollowerOracle, Noisy, best_response_exact
from .geometry import Ball, Box, NonnegBall, Shrunk, shrink
from .induce import (InduceConfig, InduceResult, learn_lead, learn_price, learn_price_ellipsoid,
                     learn_price_noisy, learn_toll_ellipsoid)
from .leader import (LeaderResult, StackelbergInstance, learn_opt, opro, opro_noisy,
                     pricing_instance, procurement_instance)
from .preferences import CES, CobbDouglas, LinearCost, QuadraticCost, QuadraticValuation
from .routing import (RoutingGame, braess_game, enforce_target_flow, optimize_tolls,
                      two_link_game, wardrop_equilibrium)
from .zoo import ApproxEvaluator, ZooConfig, maximize, minimize

__version__ = "0.1.0"
