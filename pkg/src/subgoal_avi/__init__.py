from .env import Box, RoomsEnv, build_env
