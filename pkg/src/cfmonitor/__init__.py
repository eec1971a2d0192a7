"""Cell-free massive MIMO proactive monitoring simulator."""
