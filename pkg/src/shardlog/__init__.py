"""Tamper-evident, threshold-shared logging for post-intrusion forensics.

Every event a node logs is MAC-chained under the node's key, sent in full to
a central log server, and additionally cut into n Shamir shares spread over
n randomly chosen nodes. Any k surviving shares rebuild the record; the MAC
chain proves it genuine.
"""

__version__ = "0.1.0"
