use plasticity_lab_web::{level_path_length, level_text, project, spectrum_json};

#[test]
fn spectrum_of_identity() {
    let v: serde_json::Value = serde_json::from_str(&spectrum_json(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap()).unwrap();
    assert_eq!(v["stable_rank"], 3);
    assert!((v["effective_rank"].as_f64().unwrap() - 3.0).abs() < 1e-12);
    assert_eq!(v["singular_values"].as_array().unwrap().len(), 3);
}

#[test]
fn spectrum_of_zero_matrix_has_no_rank() {
    let v: serde_json::Value = serde_json::from_str(&spectrum_json(2, 2, vec![0.0; 4]).unwrap()).unwrap();
    assert!(v["stable_rank"].is_null() && v["effective_rank"].is_null());
    assert!(spectrum_json(2, 2, vec![0.0; 3]).is_err());
}

#[test]
fn projection_keeps_mass_and_handles_terminals() {
    let p = vec![0.2; 5];
    let m = project(&p, 1.0, 0.9, false, -2.0, 2.0).unwrap();
    assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // terminal reward 1 sits exactly on an atom
    assert_eq!(project(&p, 1.0, 0.9, true, -2.0, 2.0).unwrap(), vec![0.0, 0.0, 0.0, 1.0, 0.0]);
    assert!(project(&p, 0.0, 0.9, false, 2.0, -2.0).is_err());
}

#[test]
fn levels_render_and_are_solvable() {
    let text = level_text(9, 3).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r.chars().count() == 9));
    assert_eq!(text.matches('A').count(), 1);
    assert_eq!(text.matches('G').count(), 1);
    assert_eq!(text, level_text(9, 3).unwrap());
    assert!(level_path_length(9, 3).unwrap() >= 1);
    assert!(level_text(2, 0).is_err());
}
