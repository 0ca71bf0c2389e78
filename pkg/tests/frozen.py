"""Reference values produced by ``oracles/derive.py`` (mpmath and brute force).

Regenerate with ``python3 tests/oracles/derive.py``; the script does not
import the package.
"""

NORMAL_PDF_0 = 0.39894228040143268
MIXTURE_NORMAL_0 = 0.053990966513188052
MIXTURE_BINOM_2 = 0.7
BINOM_DLOG_HALF_1 = 0.0
BINOM_COV_1_1 = 3.0
BINOM_COV_VECTOR_1 = 4.0
BINOM_FISHER_HALF = 8.0
NORMAL_COV_1_1 = 1.7182818284590452
NORMAL_COVSTAR_1_1 = 0.71828182845904524
NORMAL_CORR_1_M1 = -0.36787944117144232
BINOM_SCORE_1 = 4.0
BINOM_KAPPA0 = {0.3: 1.2574356430816967, 0.5: 1.2309594173407747, 0.7: 1.2574356430816967}
NORMAL_KAPPA0_HALF_TWO = 1.2871055263695211
DISK = {1.0: (5.0886630228911257, 14.185965645399384), 2.0: (14.234844934968546, 18.96624182651963)}
TAIL_D1 = 0.012458894569872401
TAIL_D2 = 0.03770008700987035
CRITICAL_CASE2 = 1.6448536269514727
WEIGHTS_THREE_POINTS = 0.666779
WEIGHTS_FAR_SUPPORT = 1.0
SYM_DATA = [0.3, 0.8, 1.1, 1.6, 1.9, 2.2, 2.5, 2.9, 3.4, 4.0]
SYM_SUPPORT = 2.05
TWO_INDEP_TAIL_2 = 0.04498269539269885
ONE_POINT_TAIL_2 = 0.022750131948179207
