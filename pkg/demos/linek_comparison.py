"""A small LineK race between adaptive design, the base reward and a fixed
invariant reward. Five seeds, so it runs in about a minute."""

from reward_design.experiments import ordering_experiment, ordering_holds
from reward_design.harness import TrainingConfig
from reward_design.learners import LearnerConfig


def main():
    cfg = TrainingConfig(episodes=8000, eval_period=100, stop_fraction=0.9,
                         learner=LearnerConfig(alpha=0.02, baseline=True))
    summary, _ = ordering_experiment("linek", cfg, range(5))
    print("episodes until J reaches 90% of the target policy's return")
    for tech, s in summary.items():
        print(f"  {tech:9s} median {s.median:6.0f}  runs {s.episodes}")
    ok, detail = ordering_holds(summary)
    print(f"\nadaptive fastest with separated quartiles: {ok}\n  {detail}")


if __name__ == "__main__":
    main()
