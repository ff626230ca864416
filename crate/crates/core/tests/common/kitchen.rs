use medoe::overcooked::{KitchenState, Orientation, Place, Progress};

pub const A0: (usize, usize) = (2, 2);
pub const A1: (usize, usize) = (6, 2);

pub fn c(x: usize, y: usize) -> Place {
    Place::Counter((x, y))
}

/// (tomato, plate, chopped, left expert, right expert). Agent 0 stands at
/// (2, 2), agent 1 at (6, 2); held items sit on the holder's cell.
#[rustfmt::skip]
pub fn truth_table() -> Vec<(Place, Place, bool, u8, u8)> {
    use Place::{Held, OnPlate};
    vec![
        (c(8, 1), c(1, 0), false, 0, 0),
        (c(8, 2), c(2, 0), false, 0, 0),
        (c(8, 3), c(3, 0), true, 0, 0),
        (c(4, 1), c(1, 0), false, 1, 0),
        (c(4, 2), c(2, 0), true, 1, 0),
        (c(4, 3), c(3, 0), false, 1, 0),
        (c(0, 1), c(1, 0), true, 1, 0),
        (c(0, 2), c(4, 2), false, 1, 0),
        (c(0, 3), c(4, 3), true, 1, 0),
        (c(4, 1), c(4, 2), false, 1, 0),
        (c(4, 2), c(4, 1), true, 1, 0),
        (c(1, 4), c(2, 0), false, 1, 0),
        (c(2, 4), c(8, 2), false, 0, 0),
        (c(0, 2), c(5, 0), true, 0, 0),
        (c(4, 3), c(7, 4), true, 0, 0),
        (c(8, 1), c(4, 1), false, 0, 0),
        (c(6, 0), c(5, 4), true, 0, 0),
        (Held(0), c(1, 0), false, 1, 0),
        (Held(0), c(4, 2), true, 1, 0),
        (Held(1), c(1, 0), false, 0, 0),
        (Held(1), c(4, 1), true, 0, 0),
        (c(0, 2), Held(0), false, 1, 0),
        (c(4, 2), Held(0), true, 1, 0),
        (c(4, 2), Held(1), true, 0, 0),
        (c(8, 3), Held(1), false, 0, 0),
        (Held(0), Held(1), true, 0, 0),
        (Held(1), Held(0), true, 0, 0),
        (OnPlate, c(4, 1), true, 0, 1),
        (OnPlate, c(4, 2), true, 0, 1),
        (OnPlate, c(4, 3), true, 0, 1),
        (OnPlate, c(5, 0), true, 0, 1),
        (OnPlate, c(8, 2), true, 0, 1),
        (OnPlate, c(5, 4), true, 0, 1),
        (OnPlate, c(1, 0), true, 0, 0),
        (OnPlate, c(0, 2), true, 0, 0),
        (OnPlate, c(2, 4), true, 0, 0),
        (OnPlate, Held(0), true, 0, 0),
        (OnPlate, Held(1), true, 0, 1),
        (OnPlate, c(3, 0), true, 0, 0),
        (OnPlate, c(7, 0), true, 0, 1),
        (c(4, 1), c(4, 3), true, 1, 0),
        (c(3, 0), c(2, 0), true, 1, 0),
        (c(1, 0), c(0, 3), false, 1, 0),
        (c(5, 0), c(1, 0), true, 0, 0),
        (c(7, 4), c(4, 2), false, 0, 0),
        (c(8, 2), c(8, 1), true, 0, 0),
        (c(4, 2), c(5, 4), true, 0, 0),
        (c(0, 1), c(8, 3), false, 0, 0),
        (Held(0), c(8, 1), false, 0, 0),
        (c(2, 0), c(4, 3), false, 1, 0),
    ]
}

/// A state with both agents at their spawns and the given item placement.
pub fn state(tomato: Place, plate: Place, chopped: bool) -> KitchenState {
    KitchenState {
        positions: [A0, A1],
        orientations: [Orientation::Up; 2],
        tomato,
        plate,
        chopped,
        board: (0, 2),
        star: (6, 4),
        progress: Progress::default(),
        steps_elapsed: 0,
    }
}
