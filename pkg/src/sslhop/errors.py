class SSLError(ValueError):
    """Raised for every contract violation in sslhop; the message is the diagnostic."""
