"""Trap-based verification of blind MBQC on brickwork states."""
