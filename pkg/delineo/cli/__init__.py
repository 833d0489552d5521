from .config import RunConfig, RemoteSettings, ExitCode, load_config, config_from_dict
from .main import main, build_parser, cmd_plan, cmd_execute, cmd_eval, cmd_phantom, cmd_pipeline, is_approved
