// External BST insert.  Descends to a leaf keeping the parent pointer,
// then dispatches on the parent edge and the key comparison; each arm
// holds the synthesized block for that shape.

bool insert(int key){
    while(true){
        struct node * parent = root;
        struct node * curr = root;
        @@begin-destructive-update
        while(curr->left != NULL && curr->right != NULL){
            parent = curr;
            if(curr->key < key)
                curr = curr->right;
            else
                curr = curr->left;
        }
        if(curr->key == key)
            return false;
        if(parent->left == curr && key < curr->key){
            @@insert_ext_tree::block1
            return true;
        }
        if(parent->left == curr && key >= curr->key){
            @@insert_ext_tree::block2
            return true;
        }
        if(parent->right == curr && key < curr->key){
            @@insert_ext_tree::block3
            return true;
        }
        if(parent->right == curr && key >= curr->key){
            @@insert_ext_tree::block4
            return true;
        }
        @@end-destructive-update
    }
}
