// Print the experiment state machine as a table of legal transitions.

use std::error::Error;

use exrunner::model::Mode;
use exrunner::orchestrator::{transition, EventKind, ExperimentState, LifecycleEvent, Phase};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for mode in [Mode::Automatic, Mode::SemiAutomatic] {
        println!("== {mode:?}, two runs left of three ==");
        for phase in Phase::ALL {
            let state = ExperimentState {
                phase,
                completed_count: 1,
                paused_from: Some(Phase::CoolingDown),
                ..ExperimentState::new(3, mode, 0.5)
            };
            let moves: Vec<String> = EventKind::ALL
                .iter()
                .filter_map(|&kind| {
                    let event = match kind {
                        EventKind::BeforeRun => LifecycleEvent::before_run("r2"),
                        _ => kind.into(),
                    };
                    let next = transition(&state, &event).ok()?;
                    Some(format!("{kind} -> {}", next.phase))
                })
                .collect();
            println!("{:<17} {}", phase.to_string(), moves.join(", "));
        }
    }
    Ok(())
}

fn main() {
    run_example().unwrap();
}
