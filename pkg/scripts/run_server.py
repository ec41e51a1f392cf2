import logging
import os
import sys

import uvicorn
from dotenv import load_dotenv

# Load env vars first
load_dotenv()

# Ensure project root is in python path
sys.path.append(os.getcwd())

from core.logging_setup import configure_logging  # noqa: E402

logger = logging.getLogger("run_server")


def main() -> None:
    configure_logging()
    port = int(os.environ.get("PORT", 8000))
    logger.info(f"Starting assimilation experiment server on port {port}...")
    uvicorn.run("orchestration.api:app", host="0.0.0.0", port=port, reload=False)


if __name__ == "__main__":
    main()
