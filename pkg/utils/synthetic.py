# utils/synthetic.py - Synthetic referendum data under a beta-binomial random-effects model
# Propensities ~ Beta(mean mu, variance tau2); on the log-odds scale the
# between-region variance is roughly tau2 / (mu(1-mu))^2.
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from dotenv import dotenv_values

from models.errors import DataParseError, DomainError
from models.records import REGION_CODES, AreaRecord, RegionEstimate
from utils.effect_core import proportion_to_log_odds
from utils.meta_engine import dl_tau2, pool_fixed_iv
from utils.validation import validate_count, validate_proportion

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenerativeConfig:
    k: int
    mu: float
    tau2: float
    region_sizes: tuple
    seed: int = 0
    turnout: Optional[float] = None

    def __post_init__(self):
        validate_count(self.k, 'k', minimum=1)
        validate_proportion(self.mu, 'mu')
        if self.tau2 < 0:
            raise DomainError('tau2 must be non-negative', field='tau2', value=self.tau2)
        if self.tau2 > 0 and self.tau2 >= self.mu * (1 - self.mu):
            raise DomainError(f'no beta distribution has mean {self.mu} and variance {self.tau2}',
                              field='tau2', value=self.tau2)
        if len(self.region_sizes) != self.k:
            raise DomainError(f'{len(self.region_sizes)} region sizes given for k={self.k}',
                              field='region_sizes')
        for size in self.region_sizes:
            if validate_count(size, 'region size') < 2:
                raise DomainError('every region needs at least 2 voters', field='region_sizes',
                                  value=size)
        if self.turnout is not None:
            validate_proportion(self.turnout, 'turnout', allow_one=True)

    @property
    def log_odds_tau2(self):
        """Delta-method image of tau2 on the log-odds scale."""
        return self.tau2 / (self.mu * (1 - self.mu)) ** 2

    @classmethod
    def build(cls, k, mu, tau2, size, seed=0, turnout=None):
        """Convenience constructor; a scalar `size` is repeated for every region."""
        sizes = tuple(size) if isinstance(size, (list, tuple)) else (int(size),) * int(k)
        return cls(k=int(k), mu=float(mu), tau2=float(tau2), region_sizes=sizes,
                   seed=int(seed), turnout=turnout)

    @classmethod
    def from_file(cls, path, **overrides):
        """Flat KEY=VALUE file: K, MU, TAU2, REGION_SIZES (comma list or one value), SEED, TURNOUT."""
        values = {key.upper(): value for key, value in dotenv_values(path).items()}
        for key, value in overrides.items():
            if value is not None:
                values[key.upper()] = str(value)
        try:
            sizes = [int(s) for s in values['REGION_SIZES'].split(',') if s.strip()]
            k = int(values.get('K', len(sizes)))
            turnout = values.get('TURNOUT')
            return cls.build(k=k, mu=float(values['MU']), tau2=float(values.get('TAU2', 0)),
                             size=sizes if len(sizes) > 1 else sizes[0],
                             seed=int(values.get('SEED', 0)),
                             turnout=float(turnout) if turnout else None)
        except KeyError as e:
            raise DataParseError(f'{path}: missing key {e.args[0]}', path=str(path))
        except (TypeError, ValueError) as e:
            raise DataParseError(f'{path}: {e}', path=str(path))

    def write(self, path):
        lines = [
            f'K={self.k}',
            f'MU={self.mu!r}',
            f'TAU2={self.tau2!r}',
            f'REGION_SIZES={",".join(str(s) for s in self.region_sizes)}',
            f'SEED={self.seed}',
        ]
        if self.turnout is not None:
            lines.append(f'TURNOUT={self.turnout!r}')
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write('\n'.join(lines) + '\n')


def solve_beta_params(mu, tau2):
    """Method-of-moments (alpha, beta) for a beta distribution with mean mu and variance tau2."""
    mu = validate_proportion(mu, 'mu')
    if not (0 < tau2 < mu * (1 - mu)):
        raise DomainError(f'no beta distribution has mean {mu} and variance {tau2}',
                          field='tau2', value=tau2)
    common = mu * (1 - mu) / tau2 - 1
    return mu * common, (1 - mu) * common


def _draw(config, rng):
    if config.tau2 > 0:
        alpha, beta = solve_beta_params(config.mu, config.tau2)
        thetas = rng.beta(alpha, beta, size=config.k)
    else:
        thetas = np.full(config.k, config.mu)

    records = []
    for i, (size, theta) in enumerate(zip(config.region_sizes, thetas)):
        valid = int(rng.binomial(size, config.turnout)) if config.turnout is not None else int(size)
        leave = int(rng.binomial(valid, theta))
        records.append(AreaRecord(
            area=f'SYN{i + 1:03d}',
            region=REGION_CODES[i % len(REGION_CODES)],
            electorate=int(size),
            votes_cast=valid,
            rejected=0,
            valid=valid,
            leave=leave,
            remain=valid - leave,
        ))
    return records


def simulate(config):
    """One AreaRecord per region; identical config and seed give identical records."""
    return _draw(config, np.random.default_rng(config.seed))


def _estimates(records):
    return [RegionEstimate.from_counts(r.area, r.leave, r.remain) for r in records]


@dataclass(frozen=True)
class RecoveryReport:
    replicates: int
    mean_tau2: float
    true_tau2: float
    relative_error: float
    fe_coverage: float
    skipped: int = 0
    tau2_draws: tuple = field(default=(), repr=False)

    def to_dict(self):
        return {
            'replicates': self.replicates,
            'mean_tau2': self.mean_tau2,
            'true_tau2': self.true_tau2,
            'relative_error': self.relative_error,
            'fe_coverage': self.fe_coverage,
            'skipped': self.skipped,
        }


def recovery_study(config, replicates):
    """Replicate the generator and check how well the estimators recover the truth.

    Each replicate runs on its own SeedSequence child of `config.seed`. Reports the
    mean DL tau^2 (log-odds scale) against the delta-method truth and the share of
    replicates whose FE 95% CI covers logit(mu).
    """
    replicates = validate_count(replicates, 'replicates', minimum=1)
    truth = proportion_to_log_odds(config.mu)
    children = np.random.SeedSequence(config.seed).spawn(replicates)

    tau2_draws = []
    covered = 0
    skipped = 0
    for child in children:
        records = _draw(config, np.random.default_rng(child))
        if any(r.leave == 0 or r.remain == 0 for r in records):
            skipped += 1
            continue
        estimates = _estimates(records)
        fe = pool_fixed_iv(estimates)
        low, high = fe.ci95
        covered += low <= truth <= high
        if len(estimates) > 1:
            tau2_draws.append(dl_tau2(estimates))

    used = replicates - skipped
    if used == 0:
        raise DomainError('every replicate produced a zero count; increase region sizes',
                          field='region_sizes')
    mean_tau2 = float(np.mean(tau2_draws)) if tau2_draws else 0.0
    true_tau2 = config.log_odds_tau2
    relative_error = abs(mean_tau2 - true_tau2) / true_tau2 if true_tau2 > 0 else math.nan
    logger.info('recovery over %d replicates: mean tau2 %.5f vs %.5f, FE coverage %.3f',
                used, mean_tau2, true_tau2, covered / used)
    return RecoveryReport(replicates=used, mean_tau2=mean_tau2, true_tau2=true_tau2,
                          relative_error=relative_error, fe_coverage=covered / used,
                          skipped=skipped, tau2_draws=tuple(tau2_draws))
