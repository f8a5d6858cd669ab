//! Wall table: one row per class with its conflicts, objects and subjects.

use crate::policy::UserId;
use crate::store::EngineState;

const HEADER: [&str; 6] = [
    "Class",
    "Conflicting Classes",
    "Object",
    "Binary Object Wall",
    "Subject",
    "Binary Subject Wall",
];

/// Renders current walls in class-slot order. Subjects whose role is in no
/// class are listed last under class `-`.
pub fn render_wall_table(state: &EngineState) -> String {
    let policy = state.policy();
    let mut rows: Vec<[String; 6]> = Vec::new();

    let subjects_of = |class: Option<&str>| -> Vec<&UserId> {
        policy
            .users()
            .iter()
            .filter(|u| policy.class_of(&u.role).map(|c| c.id.as_str()) == class)
            .map(|u| &u.id)
            .collect()
    };

    for class in policy.classes_by_slot() {
        let conflicting: Vec<&str> = policy
            .conflicting_classes(&class.id)
            .iter()
            .map(|c| c.id.as_str())
            .collect();
        let objects: Vec<_> = policy
            .objects()
            .iter()
            .filter(|o| o.owning_class == class.id)
            .collect();
        let subjects = subjects_of(Some(class.id.as_str()));
        let height = objects.len().max(subjects.len()).max(1);
        for i in 0..height {
            let (object, object_wall) = objects.get(i).map_or((String::new(), String::new()), |o| {
                let wall = state.object_wall(&o.id).map(ToString::to_string).unwrap_or_default();
                (o.id.to_string(), wall)
            });
            let (subject, subject_wall) = subjects.get(i).map_or((String::new(), String::new()), |u| {
                let wall = state.subject_wall(u).map(ToString::to_string).unwrap_or_default();
                (u.to_string(), wall)
            });
            let (name, conflicts) = if i == 0 {
                (class.id.to_string(), format!("{{{}}}", conflicting.join(", ")))
            } else {
                (String::new(), String::new())
            };
            rows.push([name, conflicts, object, object_wall, subject, subject_wall]);
        }
    }
    for user in subjects_of(None) {
        let wall = state.subject_wall(user).map(ToString::to_string).unwrap_or_default();
        rows.push([
            "-".into(),
            String::new(),
            String::new(),
            String::new(),
            user.to_string(),
            wall,
        ]);
    }

    let mut widths = HEADER.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: [&str; 6]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join(" | ").trim_end().to_string() + "\n"
    };
    let mut out = line(HEADER);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&(rule.join("-|-") + "\n"));
    for row in &rows {
        out.push_str(&line(std::array::from_fn(|i| row[i].as_str())));
    }
    out
}
