# %% [markdown]
# # One joystick axis, four goals
#
# The cross world distills the disambiguation problem: a point starts at the
# origin and must reach one of four corners, but the user only has a 1-DoF
# latent input. Without language the decoder cannot know which corner you
# mean. This script trains the three models and drives each with the
# scripted expert.
#
# Expect a couple of minutes of training time on one core.

# %%
import numpy as np

from langsteer import control as C
from langsteer import experiments as X
from langsteer import models as M
from langsteer import sim

report = X.cross_experiment(seed=0, demos_per_task=25, epochs=300)
for name, res in report["models"].items():
    print(f"{name:15s} loss {res['initial_loss']:.3f} -> {res['final_loss']:.5f}  "
          f"commands {res['commands_completed']}/4  {res['per_task']}")
print(f"runtime: {report['runtime_seconds']:.0f}s")

# %% [markdown]
# ## Holding the stick forward
#
# With language fixing the task, the single latent axis means "progress":
# pinning z=+1 should carry the point to the commanded corner and park there.

# %%
language = X.load_sim_language("cross")
bundle: M.ModelBundle = report["models"]["language_d1"]["bundle"]
for task in sim.CROSS_TASKS:
    env = sim.CrossWorld()
    env.reset(task)
    session = C.ControlSession(variant="language", env=env, dt=0.125, bundle=bundle)
    session.use_embedding(language.first_by_task[task].embedding)
    for _ in range(100):
        C.latent_tick(session, np.array([1.0]))
    dist = np.linalg.norm(env.position - sim.CROSS_TASKS[task])
    print(f"hold z=+1 on {task:5s}: terminal distance {dist:.3f}")
