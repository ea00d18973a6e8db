"""Domain exception hierarchy shared by all robostore modules.

Every error a caller is expected to handle derives from RoboStoreError;
the CLI maps these to exit code 1 (usage problems exit 2).
"""


class RoboStoreError(Exception):
    """Base class for all domain errors."""


# --- storage engine ---

class DuplicateTable(RoboStoreError):
    pass


class DuplicateFamily(RoboStoreError):
    pass


class EmptyFamilyList(RoboStoreError):
    pass


class UnknownTable(RoboStoreError):
    pass


class UnknownFamily(RoboStoreError):
    pass


class SuperKeyMismatch(RoboStoreError):
    """Super key supplied for a plain family, or missing for a super one."""


class InvalidTimestamp(RoboStoreError):
    """Timestamp outside the unsigned 128-bit domain, or zero where a real stamp is required."""


class InvalidRange(RoboStoreError):
    """Range with start > end (scans, index windows)."""


# --- timestamp index ---

class UnknownOwner(RoboStoreError):
    pass


# --- tablet location ---

class UnknownRange(RoboStoreError):
    pass


class Unavailable(RoboStoreError):
    """Operation cannot complete under the current partition (CP mode, root pointer)."""


# --- transaction layer ---

class TxnNotActive(RoboStoreError):
    pass


class LtmDown(RoboStoreError):
    pass


# --- mapreduce ---

class UnknownFunction(RoboStoreError):
    pass


class ZeroSplits(RoboStoreError):
    pass


class JobFailed(RoboStoreError):
    pass


# --- graph ---

class UnknownElement(RoboStoreError):
    pass


class UnknownProperty(RoboStoreError):
    pass


# --- instruction chains ---

class EmptyChain(RoboStoreError):
    pass


class CycleDetected(RoboStoreError):
    pass


class DanglingLink(RoboStoreError):
    pass


class BrokenLink(RoboStoreError):
    pass


class UnknownTask(RoboStoreError):
    pass


class OutOfRange(RoboStoreError):
    pass


# --- cluster simulator ---

class InvalidConfig(RoboStoreError):
    pass
