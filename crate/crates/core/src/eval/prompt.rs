//! Prompt text for each category and frame count.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::scenarios::Category;

pub const TRAFFIC_QUESTION: &str = "is there traffic causing the car to slow down?";
pub const SPEED_LIMIT_CAMERA: &str =
    "All are taken from the same camera that is fixed on a moving car going at the speed limit.";
pub const DESCRIBE_FRAMES: &str = "describe what is likely going on in each frame";
pub const AVOID_OBSTACLES: &str = "while avoiding obstacles";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptOverrides {
    /// Appends the obstacle-avoidance objective to planning prompts.
    pub avoid_obstacles: bool,
    /// Replaces the category question (free-text variants have no label).
    pub question: Option<String>,
}

/// Category question, asked verbatim in the prompt.
pub fn question(category: Category, overrides: &PromptOverrides) -> String {
    if let Some(q) = &overrides.question {
        return q.clone();
    }
    match category {
        Category::ForwardBackward => "Is the car moving forward or backward?".into(),
        Category::AccelDecel => "Is the car accelerating or decelerating?".into(),
        Category::LeftRight => "Is the car turning left or right?".into(),
        Category::Traffic => TRAFFIC_QUESTION.into(),
        Category::Speeding => "Is the other vehicle on the road speeding?".into(),
        Category::OpenSetObject => "Can the ego-car keep moving in the same lane?".into(),
        Category::Plane => "Can the car keep moving along the road?".into(),
        Category::Planning => {
            let mut q = String::from(
                "Three candidate trajectories are painted on the road in red, green and blue. \
                 Which trajectory should the car follow to keep driving in its lane",
            );
            if overrides.avoid_obstacles {
                q.push(' ');
                q.push_str(AVOID_OBSTACLES);
            }
            q.push('?');
            q
        }
    }
}

fn grid_intro(frame_count: usize) -> String {
    if frame_count == 1 {
        return "The image is a single video frame from a driving scene.".into();
    }
    let rows = frame_count.div_ceil(3);
    format!(
        "The image is a grid of {frame_count} video frames from a driving scene, arranged in {rows} row{} of 3 \
         and read left to right, top to bottom. The number in the corner of each frame gives its order, \
         and consecutive frames are half a second apart.",
        if rows == 1 { "" } else { "s" }
    )
}

/// Full prompt for a category and frame count.
pub fn build_prompt(category: Category, frame_count: usize, overrides: &PromptOverrides) -> String {
    let camera = if category == Category::Speeding {
        SPEED_LIMIT_CAMERA.to_string()
    } else {
        "The frames come from a camera fixed on a moving car.".to_string()
    };
    let describe = if frame_count == 1 {
        "First describe what is likely going on in the frame.".to_string()
    } else {
        format!("First {DESCRIBE_FRAMES}.")
    };
    let labels = category.answer_set().join(", ");
    format!(
        "{}\n{}\n\nQuestion: {}\n\n{}\nThen answer the question. End your reply with a final line of the form \
         ANSWER: <label>, where <label> is one of: {}.\n",
        grid_intro(frame_count),
        camera,
        question(category, overrides),
        describe,
        labels
    )
}

/// Short stable digest recorded with each response.
pub fn prompt_hash(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
