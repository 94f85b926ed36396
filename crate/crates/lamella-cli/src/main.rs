fn main() {
    println!("lamella CLI placeholder");
}
