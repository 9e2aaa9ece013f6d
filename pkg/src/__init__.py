"""SG-PBFT."""
