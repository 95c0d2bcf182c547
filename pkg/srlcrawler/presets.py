"""
Preset definitions collected in one place for easier update.

Each function returns a plain dictionary.  The 'paper' preset carries the
published training parameters; the desk preset rescales them to run on a
workstation and is the one acceptance runs use.
"""


def desk_preset():
    """
    Return dictionary with desk-scale training settings.

    hidden_widths:   actor and critic hidden layers
    buffer_size:     replay capacity (buffer_cap optionally caps it at 1600)
    minibatch_size:  transitions per update
    actor_lr / critic_lr and optimizer names
    base_variance:   None means (0.2 * action range) ** 2
    noise_decay:     variance multiplier per clock tick
    """
    return {
        'name': 'desk',
        'desk_verified': True,
        'hidden_widths': [64, 64],
        'dropout_rate': 0.1,
        'episodes': 300,
        'steps_per_episode': 400,
        'buffer_size': 10000,
        'buffer_cap': None,
        'minibatch_size': 64,
        'actor_lr': 1e-3,
        'critic_lr': 1e-3,
        'actor_optimizer': 'rmsprop',
        'critic_optimizer': 'adam',
        'tau': 0.005,
        'gamma': 0.99,
        'base_variance': None,
        'noise_decay': 0.9999,
        'noise_per_episode': False,
        'seeds': list(range(10)),
        'eval_episodes': 20,
        'n_q_samples': 16,
        'accept_threshold': 0.5,
        'actor_gradient': 'dpg',
        'bq_window': 8,
        }


def paper_preset():
    """
    Return dictionary with the published training parameters:
    4x1200 + 1x600 hidden layers, 7,000 episodes of 2,500 steps, replay
    buffer 1600, minibatch 300, learning rate 3e-2.
    """
    preset = desk_preset()
    preset.update({
        'name': 'paper',
        'desk_verified': False,
        'hidden_widths': [1200, 1200, 1200, 1200, 600],
        'episodes': 7000,
        'steps_per_episode': 2500,
        'buffer_size': 1600,
        'minibatch_size': 300,
        'actor_lr': 3e-2,
        'critic_lr': 3e-2,
        })
    return preset


def get_preset(name):
    presets = {'desk': desk_preset, 'paper': paper_preset}
    if name not in presets:
        raise KeyError(f"unknown preset '{name}', choose from {sorted(presets)}")
    return presets[name]()


def robot_defaults():
    """
    Return dictionary with kinematic crawler settings.

    k_p:     propulsion per radian of stance coxa sweep
    k_h:     heading change per unit of left/right push asymmetry
    k_bias:  heading drag per missing leg, relative to forward motion
    """
    return {
        'num_legs': 6,
        'joints_per_leg': 3,
        'max_delta': 0.1,
        'k_p': 0.25,
        'k_h': 0.5,
        'k_bias': 0.15,
        'slip_factor': 0.5,
        'contact_tol': 1e-6,
        'gait_period': 20,
        'coxa_amplitude': 0.2,
        'femur_lift': 0.3,
        'observe_damage': True,
        'init_noise': 0.0,
        }


def task_defaults():
    """
    Return dictionary with per-task protocol settings.

    damage:              default damage kind for the task
    threshold_fraction:  oracle threshold as a share of the healthy gait return
    """
    return {
        'x': {
            'label': 'Task_X',
            'damage': 'amputate_leg',
            'threshold_fraction': 0.7,
            },
        'xy': {
            'label': 'Task_XY',
            'damage': 'amputate_leg',
            'threshold_fraction': 0.7,
            },
        'p2p': {
            'label': 'Task_P2P',
            'damage': 'amputate_leg',
            'threshold_fraction': None,
            },
        }
